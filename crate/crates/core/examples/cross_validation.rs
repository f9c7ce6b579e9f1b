//! Stratified, subject-level k-fold plans aligned across sites.
//!
//!     cargo run --example cross_validation

use fedspeech::data::{generate_synthetic, three_site_preset};
use fedspeech::eval::{plan_folds, stratified_kfold, SiteCorpus};
use fedspeech::pool::{pool_corpus, Label};

fn main() -> fedspeech::Result<()> {
    // 50 PD + 50 HC into 10 folds: exactly 5 + 5 per fold.
    let mut labels = vec![Label::Parkinson; 50];
    labels.extend(vec![Label::Healthy; 50]);
    let folds = stratified_kfold(&labels, 10, 1)?;
    for f in 0..3 {
        let pd = (0..100).filter(|&i| folds[i] == f && labels[i] == Label::Parkinson).count();
        let hc = (0..100).filter(|&i| folds[i] == f && labels[i] == Label::Healthy).count();
        println!("fold {f}: {pd} PD + {hc} HC");
    }

    let sites = three_site_preset(4)
        .iter()
        .map(|s| Ok(SiteCorpus::new(&s.site_id, pool_corpus(&generate_synthetic(s)?)?)))
        .collect::<fedspeech::Result<Vec<_>>>()?;
    for repetition in 0..2 {
        let plan = plan_folds(&sites, 10, 2024, repetition, true)?;
        print!("repetition {repetition}, fold 0 holds out:");
        for site in &plan.sites {
            let n = site.folds.iter().filter(|&&f| f == 0).count();
            print!(" {} {n} subjects;", site.site_id);
        }
        println!();
    }
    Ok(())
}
