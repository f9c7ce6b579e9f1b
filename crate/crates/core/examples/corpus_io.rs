//! Synthetic corpus generation, the binary corpus format, and importing
//! already pooled features from CSV.
//!
//!     cargo run --example corpus_io

use std::io::Cursor;

use fedspeech::data::{generate_synthetic, parse_features, read_corpus, three_site_preset, write_corpus, CorpusFile};
use fedspeech::pool::pool_corpus;

fn main() -> fedspeech::Result<()> {
    let spec = &three_site_preset(8)[0];
    let recordings = generate_synthetic(spec)?;
    let corpus = CorpusFile::new(spec.embedding_dim, recordings)?;

    let dir = std::env::temp_dir().join("fedspeech-corpus-io");
    std::fs::create_dir_all(&dir).map_err(|e| fedspeech::Error::Data(e.to_string()))?;
    let path = dir.join(format!("{}.fpsc", spec.site_id));
    write_corpus(&path, &corpus)?;
    let back = read_corpus(&path)?;
    assert_eq!(back, corpus);
    println!("{} recordings round-tripped through {}", back.records.len(), path.display());

    // Damaged files fail with a named error rather than garbage.
    let mut bytes = corpus.encode()?;
    bytes.truncate(bytes.len() - 3);
    println!("truncated: {}", CorpusFile::decode(&bytes).unwrap_err());

    // Pooled vectors as text: subject_id, site_id, label, then 6*D values.
    let pooled = pool_corpus(&corpus.records)?;
    let mut csv = String::from("subject_id,site_id,label");
    for i in 0..pooled[0].values.len() {
        csv.push_str(&format!(",f{i}"));
    }
    csv.push('\n');
    for v in pooled.iter().take(3) {
        let values: Vec<String> = v.values.iter().map(f64::to_string).collect();
        csv.push_str(&format!("{},{},{},{}\n", v.subject_id, v.site_id, v.label, values.join(",")));
    }
    let imported = parse_features(Cursor::new(csv), spec.embedding_dim)?;
    println!("imported {} feature vectors of width {}", imported.len(), imported[0].values.len());
    Ok(())
}
