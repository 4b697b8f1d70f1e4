use std::path::Path;

use deepself_data::{
    load_csv_series, load_manifest, load_pgm_image, load_wav_pcm16, write_sine_dataset, write_wav_pcm16, DataError,
    SineTask, Split,
};
use deepself_dsp::Signal;

fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, bytes).unwrap();
    p
}

#[test]
fn loading_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let s = Signal::new(8000.0, vec![(0..400).map(|i| ((i * 37) % 200) as f64 / 100.0 - 1.0).collect()]).unwrap();
    let wav = dir.path().join("x.wav");
    write_wav_pcm16(&s, &wav).unwrap();
    let a: Signal<f64> = load_wav_pcm16(&wav).unwrap();
    let b: Signal<f64> = load_wav_pcm16(&wav).unwrap();
    assert_eq!(a, b);
    assert!(a.channel(0).iter().all(|v| (-1.0..1.0).contains(v)));

    let mut pgm = b"P5 4 2 1000\n".to_vec();
    for v in [0u16, 1, 500, 999, 1000, 7, 8, 9] {
        pgm.extend_from_slice(&v.to_be_bytes());
    }
    let path = write(dir.path(), "i.pgm", &pgm);
    let img = load_pgm_image::<f32>(&path).unwrap();
    assert_eq!(img, load_pgm_image::<f32>(&path).unwrap());
    assert_eq!(img.shape(), [1, 2, 4]);
    assert!(img.pixels.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn label_map_ignores_row_order() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["1.csv", "2.csv", "3.csv"] {
        write(dir.path(), name, b"0\n");
    }
    let a = write(dir.path(), "a.csv", b"path,label\n1.csv,zeta\n2.csv,alpha\n3.csv,mid\n");
    let b = write(dir.path(), "b.csv", b"path,label\n3.csv,mid\n1.csv,zeta\n2.csv,alpha\n");
    let (a, b) = (load_manifest(&a).unwrap(), load_manifest(&b).unwrap());
    assert_eq!(a.classes, b.classes);
    assert_eq!(a.class_index("alpha"), Some(0));
    assert_eq!(a.class_index("zeta"), Some(2));
}

#[test]
fn non_finite_series_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "s.csv", b"1\nNaN\n");
    assert!(matches!(load_csv_series::<f64>(&p, 10.0), Err(DataError::Parse { row: 2, .. })));
}

#[test]
fn synthetic_dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let task = SineTask::new(7.0, 14.0);
    write_sine_dataset(&task, dir.path(), [10, 4, 4], 2, 9).unwrap();
    let m = load_manifest(&dir.path().join("manifest.csv")).unwrap();
    assert!(m.has_splits() && m.has_folds());
    assert_eq!(m.split(Split::Train).len(), 10);
    let first = &m.rows[0];
    let signal = load_csv_series::<f64>(&first.path, task.sample_rate).unwrap();
    let (expected, class) = &task.generate::<f64>(1, 9)[0];
    assert_eq!(first.class, *class);
    for (a, b) in signal.channel(0).iter().zip(expected.channel(0)) {
        assert!((a - b).abs() < 1e-12);
    }
}
