use lead_core::corpus::{synth_generate, Corpus, SynthSpec};
use lead_core::ErrorCategory;

fn small() -> Corpus {
    synth_generate(&SynthSpec {
        n_subjects: 6,
        trial_seconds: 3.0,
        ..SynthSpec::default()
    })
    .unwrap()
}

#[test]
fn save_then_load_is_identical() {
    let c = small();
    let dir = tempfile::tempdir().unwrap();
    c.save(dir.path()).unwrap();
    let back = Corpus::load(dir.path()).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.samples.len(), 6 * 3);
    // Samples stay grouped by ascending subject ID.
    assert!(back.samples.windows(2).all(|w| w[0].subject_id <= w[1].subject_id));
}

#[test]
fn damaged_directories_are_reported() {
    let c = small();
    let dir = tempfile::tempdir().unwrap();
    c.save(dir.path()).unwrap();
    let tensor = dir.path().join(&c.manifest.subjects[2].file);

    let bytes = std::fs::read(&tensor).unwrap();
    std::fs::write(&tensor, &bytes[..bytes.len() - 4]).unwrap();
    assert_eq!(Corpus::load(dir.path()).unwrap_err().category(), ErrorCategory::Format);

    std::fs::remove_file(&tensor).unwrap();
    assert_eq!(Corpus::load(dir.path()).unwrap_err().category(), ErrorCategory::Io);

    let empty = tempfile::tempdir().unwrap();
    assert_eq!(Corpus::load(empty.path()).unwrap_err().category(), ErrorCategory::Io);
}
