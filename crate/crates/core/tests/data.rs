use std::fs;

use docl::data::{
    gen_blobs, load_feature_csv, load_feature_csv_with, load_idx, write_feature_csv, BlobSpec,
    CsvScaling,
};
use proptest::prelude::*;

fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    for v in [0x803, n, rows, cols] {
        out.extend_from_slice(&u32::to_be_bytes(v));
    }
    out.extend_from_slice(pixels);
    out
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    for v in [0x801, labels.len() as u32] {
        out.extend_from_slice(&u32::to_be_bytes(v));
    }
    out.extend_from_slice(labels);
    out
}

proptest! {
    #[test]
    fn idx_pixels_scale_by_255(pixels in prop::collection::vec(any::<u8>(), 12), labels in prop::collection::vec(0u8..3, 3)) {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lbl"));
        fs::write(&ip, idx_images(3, 2, 2, &pixels)).unwrap();
        fs::write(&lp, idx_labels(&labels)).unwrap();
        let ds = load_idx(&ip, &lp).unwrap();
        prop_assert_eq!(ds.len(), 3);
        for (i, x) in ds.features.iter().enumerate() {
            for (j, &v) in x.as_slice().iter().enumerate() {
                prop_assert_eq!(v, pixels[i * 4 + j] as f64 / 255.0);
            }
        }
        let want: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
        prop_assert_eq!(&ds.labels, &want);
    }
}

#[test]
fn idx_count_mismatch_and_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let (ip, lp) = (dir.path().join("img"), dir.path().join("lbl"));
    fs::write(&ip, idx_images(2, 1, 2, &[0, 1, 2, 3])).unwrap();
    fs::write(&lp, idx_labels(&[0, 1, 1])).unwrap();
    assert_eq!(load_idx(&ip, &lp).unwrap_err().code(), "format");
    fs::write(&ip, idx_images(2, 1, 2, &[0, 1, 2])).unwrap();
    fs::write(&lp, idx_labels(&[0, 1])).unwrap();
    assert_eq!(load_idx(&ip, &lp).unwrap_err().code(), "format");
}

#[test]
fn csv_round_trip_and_scaling() {
    let ds = gen_blobs(&BlobSpec {
        n_classes: 3,
        dim: 5,
        per_class_count: 10,
        ..BlobSpec::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("blobs.csv");
    write_feature_csv(&ds, fs::File::create(&p).unwrap()).unwrap();
    let back = load_feature_csv_with(&p, CsvScaling::AsIs).unwrap();
    assert_eq!(back, ds);

    let scaled = load_feature_csv(&p).unwrap();
    for j in 0..5 {
        let col: Vec<f64> = scaled.features.iter().map(|x| x.as_slice()[j]).collect();
        assert_eq!(col.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
        assert_eq!(col.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
    }
}

#[test]
fn csv_errors_point_at_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    fs::write(&p, "0,1,2\n1,3,x\n").unwrap();
    let msg = load_feature_csv(&p).unwrap_err().to_string();
    assert!(msg.contains("row 2"), "{msg}");
    fs::write(&p, "0,1,2\n1,3\n").unwrap();
    assert!(load_feature_csv(&p)
        .unwrap_err()
        .to_string()
        .contains("row 2"));
    fs::write(&p, "0,0.5,1.5\n").unwrap();
    assert!(load_feature_csv_with(&p, CsvScaling::AsIs).is_err());
}

#[test]
fn styled_blobs_vary_inside_their_subspace() {
    let spec = BlobSpec {
        n_classes: 1,
        dim: 16,
        per_class_count: 2000,
        center_spread: 0.2,
        noise_sigma: 0.01,
        style_rank: 2,
        style_gain: 5.0,
        seed: 3,
    };
    let ds = gen_blobs(&spec).unwrap();
    let c = &spec.centers()[0];
    let basis = &spec.style_bases()[0];
    // variance along a style direction vs. along a direction orthogonal to both
    let mut off = vec![0.0; 16];
    off[0] = 1.0;
    for q in basis {
        let p: f64 = off.iter().zip(q).map(|(a, b)| a * b).sum();
        off.iter_mut().zip(q).for_each(|(a, b)| *a -= p * b);
    }
    let n = off.iter().map(|a| a * a).sum::<f64>().sqrt();
    off.iter_mut().for_each(|a| *a /= n);
    let var = |dir: &[f64]| {
        ds.features
            .iter()
            .map(|x| {
                x.as_slice()
                    .iter()
                    .zip(c)
                    .zip(dir)
                    .map(|((v, c), d)| (v - c) * d)
                    .sum::<f64>()
                    .powi(2)
            })
            .sum::<f64>()
            / ds.len() as f64
    };
    let along = var(&basis[0]);
    let across = var(&off);
    let sd = spec.noise_sigma;
    assert!((along / (sd * sd * 26.0) - 1.0).abs() < 0.15, "{along}");
    assert!((across / (sd * sd) - 1.0).abs() < 0.15, "{across}");
}
