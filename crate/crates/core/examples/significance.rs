//! Threshold metrics, ROC/AUC and the paired t-test on per-fold accuracies.
//!
//!     cargo run --example significance

use fedspeech::eval::{confusion_metrics, histogram_scores, paired_t_test, roc_auc, student_t_sf};
use fedspeech::pool::Label::{Healthy as H, Parkinson as P};

fn main() -> fedspeech::Result<()> {
    let scores = [0.9, 0.4, 0.6, 0.1, 0.8, 0.35];
    let labels = [P, P, H, H, P, H];
    let c = confusion_metrics(&scores, &labels, 0.5)?;
    println!(
        "accuracy {:.3} sensitivity {:?} specificity {:?}",
        c.accuracy, c.sensitivity, c.specificity
    );

    let roc = roc_auc(&scores, &labels)?.expect("both classes present");
    println!("AUC {:.4} (trapezoid {:.4})", roc.auc, roc.trapezoid_area());
    for p in &roc.points {
        println!("  threshold {:>5} -> fpr {:.3} tpr {:.3}", p.threshold, p.fpr, p.tpr);
    }

    let pairs: Vec<_> = scores.iter().copied().zip(labels).collect();
    let h = histogram_scores(&pairs, 5)?;
    println!("histogram PD {:?} HC {:?}", h.pd_counts, h.hc_counts);

    // Two setups scored on the same ten folds.
    let local = [0.70, 0.75, 0.72, 0.68, 0.80, 0.74, 0.71, 0.77, 0.69, 0.73];
    let federated = [0.74, 0.78, 0.73, 0.72, 0.81, 0.79, 0.70, 0.80, 0.74, 0.76];
    let t = paired_t_test(&local, &federated)?;
    println!(
        "paired t-test: t = {:.3}, df = {}, p = {:.4}, significant at 0.05: {}",
        t.t_statistic,
        t.degrees_of_freedom,
        t.p_value,
        t.significant(0.05)
    );
    println!("two-tailed p at t = 2.228, df = 10: {:.4}", student_t_sf(2.228, 10.0));
    Ok(())
}
