use fasttab_core::data::{
    anonymise, random_table_spec, read_dataset, render_synthetic, rotate_sample, rotate_sample_by, write_dataset,
    AnonymMethod, RenderStyle, Sample, TableSpec,
};
use fasttab_core::Rng;
use proptest::prelude::*;

fn sample(seed: u64, max: usize, span: usize) -> Sample {
    let mut rng = Rng::new(seed);
    let spec = random_table_spec(&mut rng, max, max, span);
    render_synthetic(&format!("s{seed}"), &spec, &RenderStyle::default(), &mut rng).unwrap()
}

/// Runs of fully dark pixel columns (or rows), reported as the pixel
/// boundary at the run centre.
fn dark_runs(s: &Sample, vertical: bool) -> Vec<f64> {
    let (h, w) = (s.height(), s.width());
    let px = |x: usize, y: usize| s.image.data()[y * w + x];
    let (outer, inner) = if vertical { (w, h) } else { (h, w) };
    let dark: Vec<bool> = (0..outer)
        .map(|i| (0..inner).all(|j| if vertical { px(i, j) } else { px(j, i) } < 0.5))
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < outer {
        if dark[i] {
            let start = i;
            while i < outer && dark[i] {
                i += 1;
            }
            out.push((start + i) as f64 / 2.0);
        } else {
            i += 1;
        }
    }
    out
}

#[test]
fn ruled_boundaries_match_projection_profile() {
    for seed in 0..40 {
        let mut rng = Rng::new(seed);
        let rows = rng.int_range(1, 6);
        let cols = rng.int_range(1, 6);
        let anchors: Vec<_> = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c, 1, 1))).collect();
        let spec = TableSpec {
            rows,
            cols,
            header_rows: 0,
            anchors,
        };
        let s = render_synthetic("p", &spec, &RenderStyle::default(), &mut rng).unwrap();
        for (vertical, bounds, size) in [(true, &s.grid.col_bounds, s.width()), (false, &s.grid.row_bounds, s.height())] {
            let runs = dark_runs(&s, vertical);
            assert_eq!(runs.len(), bounds.len(), "seed {seed}");
            // outer frame runs sit on the first and last pixel
            for (k, (&found, &b)) in runs.iter().zip(bounds.iter()).enumerate().skip(1).take(bounds.len() - 2) {
                assert!((found - b * size as f64).abs() <= 1.0, "seed {seed} boundary {k}: {found} vs {}", b * size as f64);
            }
        }
    }
}

#[test]
fn render_is_deterministic_and_valid() {
    for seed in 0..30 {
        let a = sample(seed, 6, 3);
        let b = sample(seed, 6, 3);
        assert_eq!(a, b);
        a.validate().unwrap();
        a.grid.validate().unwrap();
        a.structure().unwrap().validate().unwrap();
        assert!(a.text_boxes.len() >= a.spans.anchors().len().min(1));
    }
}

#[test]
fn black_boxes_are_zero() {
    let s = sample(3, 5, 2);
    let out = anonymise(&s.image, &s.text_boxes, AnonymMethod::Black, &mut Rng::new(1)).unwrap();
    let (h, w) = (s.height(), s.width());
    for b in &s.text_boxes {
        for c in 0..3 {
            for y in b[1]..b[3] {
                for x in b[0]..b[2] {
                    assert_eq!(out.data()[(c * h + y) * w + x], 0.0);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn anonymise_leaves_outside_pixels(seed in any::<u64>(), m in 0usize..6) {
        let s = sample(seed, 5, 2);
        let method = AnonymMethod::ALL[m];
        let out = anonymise(&s.image, &s.text_boxes, method, &mut Rng::new(seed ^ 7)).unwrap();
        let (h, w) = (s.height(), s.width());
        let inside = |x: usize, y: usize| s.text_boxes.iter().any(|b| x >= b[0] && x < b[2] && y >= b[1] && y < b[3]);
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    if !inside(x, y) {
                        let i = (c * h + y) * w + x;
                        prop_assert_eq!(out.data()[i].to_bits(), s.image.data()[i].to_bits());
                    }
                }
            }
        }
        prop_assert!(out.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rotation_keeps_structure(seed in any::<u64>()) {
        let s = sample(seed, 5, 2);
        let r = rotate_sample(&s, 5.0, 16, &mut Rng::new(seed)).unwrap();
        prop_assert_eq!(&r.spans, &s.spans);
        prop_assert_eq!(r.grid.header_rows, s.grid.header_rows);
        prop_assert_eq!(r.structure().unwrap(), s.structure().unwrap());
        r.validate().unwrap();
        let p = r.polylines.unwrap();
        prop_assert_eq!(p.row_polys.len(), s.grid.rows + 1);
        prop_assert!(p.row_polys.iter().chain(&p.col_polys).all(|l| l.len() == 16));
    }
}

#[test]
fn zero_rotation_is_identity() {
    for seed in 0..10 {
        let s = sample(seed, 5, 2);
        let r = rotate_sample(&s, 0.0, 8, &mut Rng::new(seed)).unwrap();
        assert_eq!(r.image, s.image);
        assert_eq!(r.grid, s.grid);
        assert_eq!(r.text_boxes, s.text_boxes);
        let p = r.polylines.unwrap();
        for (line, &b) in p.row_polys.iter().zip(&s.grid.row_bounds) {
            assert!(line.iter().all(|&v| v == b));
        }
    }
}

#[test]
fn small_rotation_tilts_boundaries() {
    let s = sample(11, 4, 1);
    let r = rotate_sample_by(&s, 5.0, 32).unwrap();
    let p = r.polylines.unwrap();
    let mid = &p.row_polys[s.grid.rows / 2 + usize::from(s.grid.rows == 1)];
    // counter-clockwise on screen: boundaries rise to the right
    assert!(mid[0] > mid[31]);
}

#[test]
fn dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let samples: Vec<_> = (0..4).map(|i| sample(i, 4, 2)).collect();
    write_dataset(dir.path(), &samples).unwrap();
    let back = read_dataset(dir.path()).unwrap();
    assert_eq!(back.len(), samples.len());
    for (a, b) in samples.iter().zip(&back) {
        assert_eq!(a.grid, b.grid);
        assert_eq!(a.spans, b.spans);
        assert_eq!(a.text_boxes, b.text_boxes);
        assert!(a.image.max_abs_diff(&b.image) <= 0.5 / 255.0 + 1e-12);
    }
    let again = tempfile::tempdir().unwrap();
    write_dataset(again.path(), &back).unwrap();
    let idx = |d: &std::path::Path| std::fs::read(d.join("index.jsonl")).unwrap();
    assert_eq!(idx(dir.path()), idx(again.path()));
}
