use alprs::image::GrayImage;
use alprs::sift::{
    build_scale_space, detect_extrema, extract_keypoints, is_strict_extremum, Keypoint, SiftConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random Gaussian blobs rendered analytically, so a shifted copy is exact.
fn blob_texture(w: usize, h: usize, dx: f64, dy: f64, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..140)
        .map(|_| {
            (
                rng.gen_range(-10.0..w as f64 + 10.0),
                rng.gen_range(-10.0..h as f64 + 10.0),
                rng.gen_range(1.5..4.0),
                rng.gen_range(-0.35..0.35),
            )
        })
        .collect();
    GrayImage::from_fn(w, h, |x, y| {
        let (x, y) = (x as f64 - dx, y as f64 - dy);
        0.5 + blobs
            .iter()
            .map(|&(bx, by, s, a)| {
                a * (-((x - bx).powi(2) + (y - by).powi(2)) / (2.0 * s * s)).exp()
            })
            .sum::<f64>()
    })
}

fn repeatability(
    a: &[Keypoint],
    b: &[Keypoint],
    shift: (f64, f64),
    size: (usize, usize),
    border: f64,
    tol: f64,
) -> (usize, usize) {
    let inner: Vec<&Keypoint> = a
        .iter()
        .filter(|k| {
            k.x >= border
                && k.y >= border
                && k.x <= size.0 as f64 - 1.0 - border
                && k.y <= size.1 as f64 - 1.0 - border
        })
        .collect();
    let found = inner
        .iter()
        .filter(|k| {
            b.iter().any(|q| {
                ((q.x - k.x - shift.0).powi(2) + (q.y - k.y - shift.1).powi(2)).sqrt() <= tol
            })
        })
        .count();
    (found, inner.len())
}

#[test]
fn keypoints_repeat_under_translation() {
    let cfg = SiftConfig::default();
    let a = extract_keypoints(&blob_texture(256, 256, 0.0, 0.0, 11), &cfg).unwrap();
    let b = extract_keypoints(&blob_texture(256, 256, 5.0, 0.0, 11), &cfg).unwrap();
    let (found, total) = repeatability(&a, &b, (5.0, 0.0), (256, 256), 16.0, 1.5);
    println!("repeatability {found}/{total}");
    assert!(total > 20);
    assert!(found as f64 >= 0.8 * total as f64, "{found}/{total}");
}

#[test]
fn constant_image_has_no_keypoints() {
    let img = GrayImage::filled(256, 256, 0.42);
    assert!(extract_keypoints(&img, &SiftConfig::default())
        .unwrap()
        .is_empty());
}

#[test]
fn every_candidate_is_a_strict_extremum() {
    let cfg = SiftConfig::default();
    let ss = build_scale_space(&blob_texture(96, 96, 0.0, 0.0, 5), &cfg).unwrap();
    let cands = detect_extrema(&ss, &cfg);
    assert!(!cands.is_empty());
    #[allow(clippy::needless_range_loop)]
    for c in &cands {
        let dogs = &ss.octaves[c.octave].dogs;
        assert!(is_strict_extremum(dogs, c.level, c.x, c.y));
        // independent 26-neighbour check
        let v = dogs[c.level].get(c.x, c.y);
        let mut above = 0;
        let mut below = 0;
        for l in c.level - 1..=c.level + 1 {
            for y in c.y - 1..=c.y + 1 {
                for x in c.x - 1..=c.x + 1 {
                    if (l, x, y) == (c.level, c.x, c.y) {
                        continue;
                    }
                    let n = dogs[l].get(x, y);
                    above += usize::from(n > v);
                    below += usize::from(n < v);
                }
            }
        }
        assert!(above == 26 || below == 26);
        assert!(v.abs() >= cfg.contrast_threshold);
    }
}

#[test]
fn keypoints_have_unit_descriptors_and_wrapped_angles() {
    let kps =
        extract_keypoints(&blob_texture(128, 128, 0.0, 0.0, 3), &SiftConfig::default()).unwrap();
    assert!(!kps.is_empty());
    for k in &kps {
        assert!((k.descriptor.norm() - 1.0).abs() < 1e-4);
        assert!(k.descriptor.0.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(k.theta > -std::f64::consts::PI && k.theta <= std::f64::consts::PI);
        assert!(k.sigma > 0.0);
    }
}
