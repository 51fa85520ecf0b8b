#[path = "oracles/generator.rs"]
mod generator;

use proptest::prelude::*;
use synthseg_core::rng::RngStream;
use synthseg_core::schema::LabelSchema;
use synthseg_core::synthgen::phantom::{phantom_corpus, phantom_labels, phantom_real_image};
use synthseg_core::synthgen::*;
use synthseg_core::volume::{Grid3, IntensityVolume, LabelVolume, Volume};

fn ramp_image(dims: [usize; 3]) -> IntensityVolume {
    let grid = Grid3::axis_aligned(dims, [1.0; 3]).unwrap();
    let n = (dims[0] * dims[1] * dims[2]) as f32;
    Volume::from_fn(grid, |i, j, k| ((i * dims[1] + j) * dims[2] + k) as f32 / (n - 1.0))
}

#[test]
fn degenerate_priors_pin_every_parameter() {
    let mut p = GenPriors::identity();
    p.rotation_deg = Range::fixed(7.0);
    p.noise_std = Range::fixed(0.05);
    p.spacing_mm = [Range::fixed(3.0); 3];
    p.direction_probs = DirectionProbs { axial: 0.0, coronal: 0.0, sagittal: 0.0, isotropic: 1.0 };
    let params = sample_params(&p, &mut RngStream::new(1, 2));
    assert_eq!(params.rotation_deg, [7.0; 3]);
    assert_eq!(params.scale, [1.0; 3]);
    assert_eq!(params.noise_std, 0.05);
    assert_eq!(params.spacing_mm, [3.0; 3]);
    assert_eq!(params.direction, Direction::Isotropic);
}

#[test]
fn rotation_draws_follow_the_uniform_law() {
    let priors = GenPriors::default();
    let mut rng = RngStream::new(2024, 0);
    let mut sum = 0.0;
    let mut n = 0;
    while n < 100_000 {
        let p = sample_params(&priors, &mut rng);
        for r in p.rotation_deg {
            assert!((-15.0..=15.0).contains(&r));
            sum += r;
            n += 1;
        }
    }
    assert!((sum / n as f64).abs() < 0.2, "mean {}", sum / n as f64);
}

#[test]
fn sampled_params_stay_inside_their_priors() {
    let priors = GenPriors::default();
    for stream in 0..200 {
        let p = sample_params(&priors, &mut RngStream::new(5, stream));
        assert!(p.scale.iter().all(|&s| priors.scale.contains(s)));
        assert!(p.shear.iter().all(|&s| priors.shear.contains(s)));
        assert!(priors.noise_std.contains(p.noise_std));
        assert!(priors.gamma_log.contains(p.gamma_log));
        for a in 0..3 {
            assert!(priors.spacing_mm[a].contains(p.spacing_mm[a]));
        }
        let thick = p.spacing_mm.iter().filter(|&&s| s > 1.0).count();
        assert!(thick <= p.direction.thick_axes().len());
    }
}

#[test]
fn same_stream_same_params() {
    let priors = GenPriors::default();
    let a = sample_params(&priors, &mut RngStream::new(9, 4));
    let b = sample_params(&priors, &mut RngStream::new(9, 4));
    assert_eq!(a, b);
    assert_ne!(a, sample_params(&priors, &mut RngStream::new(9, 5)));
}

#[test]
fn identity_transform_leaves_labels() {
    let map = phantom_labels([20, 22, 18], 4, true);
    let params = GenParams::neutral();
    assert_eq!(spatial_augment(&map, &params, &mut RngStream::new(0, 0)), map);
}

#[test]
fn integer_translation_is_a_clamped_shift() {
    let map = phantom_labels([16, 16, 16], 5, false);
    let mut params = GenParams::neutral();
    let shift = [3i64, -2, 5];
    params.translation_mm = shift.map(|s| s as f64);
    let out = spatial_augment(&map, &params, &mut RngStream::new(0, 0));
    for i in 0..16i64 {
        for j in 0..16i64 {
            for k in 0..16i64 {
                let src = |v: i64, s: i64| (v - s).clamp(0, 15) as usize;
                let expect = map.get(src(i, shift[0]), src(j, shift[1]), src(k, shift[2]));
                assert_eq!(out.get(i as usize, j as usize, k as usize), expect);
            }
        }
    }
}

#[test]
fn zero_std_gmm_is_piecewise_constant() {
    let map = phantom_labels([16, 16, 16], 6, false);
    let mut params = GenParams::neutral();
    params.gmm_std = Range::fixed(0.0);
    let (image, gmm) = gmm_synthesize(&map, &params, &mut RngStream::new(1, 1));
    assert_eq!(gmm.len(), map.label_set().len());
    for (v, l) in image.data().iter().zip(map.data()) {
        let c = gmm.iter().find(|c| c.label == *l).unwrap();
        assert_eq!(*v, c.mean as f32);
    }
}

#[test]
fn two_labels_two_values() {
    let grid = Grid3::unit([4, 4, 4]);
    let labels: LabelVolume = Volume::from_fn(grid, |i, _, _| if i < 2 { 2 } else { 41 });
    let comps = [GmmComponent { label: 2, mean: 0.2, std: 0.0 }, GmmComponent { label: 41, mean: 0.7, std: 0.0 }];
    let image = gmm_render(&labels, &comps, &mut RngStream::new(0, 0));
    let mut values: Vec<u32> = image.data().iter().map(|v| v.to_bits()).collect();
    values.sort_unstable();
    values.dedup();
    assert_eq!(values.len(), 2);
}

#[test]
fn gmm_moments_converge() {
    for seed in 0..3 {
        let m = generator::single_label_moments(seed);
        assert!(m.mean_z() < 4.0, "seed {seed}: mean off by {} standard errors", m.mean_z());
        assert!(m.std_rel_error() < 0.01, "seed {seed}: std rel error {}", m.std_rel_error());
    }
}

#[test]
fn zero_bias_is_identity_and_bias_is_positive() {
    let image = ramp_image([10, 12, 8]);
    let params = GenParams::neutral();
    assert_eq!(bias_field_apply(&image, &params, &mut RngStream::new(0, 0)), image);
    let mut params = GenParams::neutral();
    params.bias_log_std = 0.4;
    let out = bias_field_apply(&image, &params, &mut RngStream::new(0, 1));
    for (a, b) in out.data().iter().zip(image.data()) {
        if *b > 0.0 {
            assert!(a / b > 0.0);
        }
    }
}

#[test]
fn bias_log_ratio_reproduces_control_values() {
    let grid = Grid3::axis_aligned([30, 25, 41], [1.0, 2.0, 1.0]).unwrap();
    let image = Volume::filled(grid, 0.5f32);
    let mut params = GenParams::neutral();
    params.bias_log_std = 0.3;
    params.bias_grid_mm = 10.0;
    let field = BiasField::sample(image.grid(), &params, &mut RngStream::new(3, 3));
    let out = field.apply(&image);
    let [cx, cy, cz] = field.control.dims();
    let mut checked = 0;
    for a in 0..cx {
        for b in 0..cy {
            for c in 0..cz {
                let v = [a * field.step[0], b * field.step[1], c * field.step[2]];
                if v[0] >= 30 || v[1] >= 25 || v[2] >= 41 {
                    continue;
                }
                let ratio = (out.get(v[0], v[1], v[2]) as f64 / 0.5).ln();
                let b_sampled = field.values[field.control.index(a, b, c)];
                assert!((ratio - b_sampled).abs() < 1e-5, "{v:?}: {ratio} vs {b_sampled}");
                checked += 1;
            }
        }
    }
    assert!(checked >= 8);
}

#[test]
fn clean_corruption_is_plain_rescaling() {
    let image = ramp_image([6, 6, 6]).map(|v| 3.0 * v + 2.0);
    let out = intensity_corrupt(&image, &GenParams::neutral(), &mut RngStream::new(0, 0));
    let (lo, hi) = image.min_max();
    for (a, b) in out.data().iter().zip(image.data()) {
        assert!((a - (b - lo) / (hi - lo)).abs() < 1e-6);
    }
}

#[test]
fn native_spacing_acquisition_is_identity() {
    let image = ramp_image([9, 10, 11]);
    let out = simulate_acquisition(&image, &GenParams::neutral());
    for (a, b) in out.data().iter().zip(image.data()) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn constant_image_survives_acquisition() {
    let grid = Grid3::axis_aligned([20, 20, 20], [1.0; 3]).unwrap();
    let image = Volume::filled(grid, 0.37f32);
    let mut params = GenParams::neutral();
    params.spacing_mm = [2.5, 1.0, 6.0];
    let out = simulate_acquisition(&image, &params);
    assert!(out.data().iter().all(|v| (v - 0.37).abs() < 1e-6));
}

#[test]
fn blur_attenuation_matches_gaussian_transfer() {
    let (measured, predicted) = generator::sinusoid_attenuation();
    assert!((measured / predicted - 1.0).abs() < 0.05, "measured {measured}, predicted {predicted}");
}

#[test]
fn generated_pairs_are_deterministic_and_well_formed() {
    let maps = phantom_corpus(3, [24, 24, 24], 10, false);
    let priors = GenPriors::default();
    let schema = LabelSchema::default_schema();
    for seed in 0..50 {
        let a = generate_pair(&maps, &priors, &mut RngStream::new(seed, 1)).unwrap();
        assert_eq!(a.image.dims(), a.labels.dims());
        assert!(a.image.data().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
        assert!(a.labels.label_set().iter().all(|&l| schema.contains(l)));
        if seed < 3 {
            let b = generate_pair(&maps, &priors, &mut RngStream::new(seed, 1)).unwrap();
            assert_eq!(a.image, b.image);
            assert_eq!(a.labels, b.labels);
        }
    }
}

#[test]
fn ground_truth_is_the_deformed_map() {
    let maps = phantom_corpus(2, [20, 20, 20], 1, false);
    let priors = GenPriors::default();
    let pair = generate_pair(&maps, &priors, &mut RngStream::new(77, 0)).unwrap();
    let mut rng = RngStream::new(77, 0);
    let index = rng.index(maps.len());
    let params = sample_params(&priors, &mut rng);
    let deformed = spatial_augment(&maps[index], &params, &mut rng);
    assert_eq!(pair.labels, deformed);
    assert_ne!(pair.labels, maps[index]);
}

#[test]
fn empty_corpus_rejected() {
    assert!(matches!(
        generate_pair(&[], &GenPriors::default(), &mut RngStream::new(0, 0)),
        Err(GenError::EmptyCorpus)
    ));
}

#[test]
fn identity_degradation_returns_input() {
    let image = ramp_image([12, 10, 8]);
    let d = degrade_real(&image, &GenPriors::identity().widened(1.0), &mut RngStream::new(3, 0)).unwrap();
    for (a, b) in d.image.data().iter().zip(image.data()) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn shipped_widening_doubles_noise_bound() {
    let base = GenPriors::default();
    let wide = base.widened(DEFAULT_WIDENING);
    assert_eq!(wide.noise_std.high, 2.0 * base.noise_std.high);
    assert_eq!(wide.bias_log_std.high, 2.0 * base.bias_log_std.high);
    assert_eq!(wide.spacing_mm[2].high, 2.0 * base.spacing_mm[2].high);
}

#[test]
fn degradation_is_deterministic_and_pairs_labels() {
    let schema = LabelSchema::default_schema();
    let map = phantom_labels([24, 24, 24], 2, false);
    let image = phantom_real_image(&map, &schema, &mut RngStream::new(1, 0));
    let priors = GenPriors::default().widened(2.0);
    let a = degrade_real(&image, &priors, &mut RngStream::new(8, 8)).unwrap();
    let b = degrade_real(&image, &priors, &mut RngStream::new(8, 8)).unwrap();
    assert_eq!(a.image, b.image);
    assert_eq!(a.deformation, b.deformation);
    let labels = a.deformation.apply_nearest(&map);
    assert_eq!(labels.dims(), a.image.dims());
    let (lo, hi) = a.image.min_max();
    assert!(lo >= 0.0 && hi <= 1.0);
}

#[test]
fn priors_roundtrip_and_validation() {
    let p = GenPriors::default();
    let text = serde_json::to_string(&p).unwrap();
    assert_eq!(GenPriors::from_json(&text).unwrap(), p);
    let mut bad = p.clone();
    bad.noise_std = Range::new(0.2, 0.1);
    assert!(GenPriors::from_json(&serde_json::to_string(&bad).unwrap()).is_err());
    let mut bad = p;
    bad.spacing_mm[1] = Range::new(0.5, 2.0);
    assert!(bad.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn deformation_never_invents_labels(seed in 0u64..1_000_000) {
        let map = phantom_labels([16, 16, 16], seed % 7, seed % 2 == 0);
        let mut rng = RngStream::new(seed, 3);
        let params = sample_params(&GenPriors::default(), &mut rng);
        let out = spatial_augment(&map, &params, &mut rng);
        let allowed = map.label_set();
        prop_assert!(out.label_set().iter().all(|l| allowed.contains(l)));
    }

    #[test]
    fn corrupted_intensities_stay_in_unit_range(seed in 0u64..1_000_000) {
        let mut rng = RngStream::new(seed, 4);
        let params = sample_params(&GenPriors::default().widened(2.0), &mut rng);
        let image = ramp_image([6, 5, 4]).map(|v| (v as f64 * 4.0 - 1.0) as f32);
        let out = intensity_corrupt(&image, &params, &mut rng);
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
