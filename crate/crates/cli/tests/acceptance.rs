//! The ten acceptance criteria, run in order by a single test. Each criterion
//! prints one PASS/FAIL line; the test fails afterwards if any line failed.
//!
//! The toy hierarchy shared by criteria 4, 5 and 10 is trained once at 24^3.

#[path = "../../core/tests/oracles/generator.rs"]
#[allow(dead_code)]
mod generator;
#[path = "../../core/tests/oracles/gradcheck.rs"]
#[allow(dead_code)]
mod gradcheck;
#[path = "../../core/tests/oracles/stats.rs"]
#[allow(dead_code)]
mod stats_oracles;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use synthseg_core::nn::{adam_step, build_network, soft_dice_loss, AdamState, Mode, Network, NetworkSpec};
use synthseg_core::pipeline::{region_dice, segment_with, volume_tensor, ModelBundle, PipelineOptions, QcReport, SegmentationResult, Stage};
use synthseg_core::rng::RngStream;
use synthseg_core::schema::{one_hot_indices, CoarseClass, LabelSchema};
use synthseg_core::stats::*;
use synthseg_core::synthgen::phantom::{phantom_corpus, phantom_real_image};
use synthseg_core::synthgen::{degrade_real, generate_pair, GenPriors};
use synthseg_core::tensor::Tensor;
use synthseg_core::trainer::{
    coarse_labels, evaluate, train_denoiser, train_regressor, train_segmenter, Level, PairedCorpus, TrainConfig,
    TrainOptions, Upstream,
};
use synthseg_core::volume::nifti::{read_header, read_intensity, read_labels, write_intensity, write_labels};
use synthseg_core::volume::{Grid3, IntensityVolume, LabelVolume, Volume};

const QC_THRESHOLD: f64 = 0.65;
const TOY_DIMS: [usize; 3] = [24; 3];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------------------------------------------------------------- criterion 1

fn gradient_correctness() -> Outcome {
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    let mut note = |err: f64, what: String| {
        if !(err <= worst) {
            worst = err;
            worst_at = what;
        }
    };
    for kind in gradcheck::all_layer_kinds() {
        for seed in 0..20 {
            note(gradcheck::check_layer(&kind, seed), format!("{kind:?}"));
        }
    }
    for seed in 0..20 {
        note(gradcheck::check_soft_dice(seed), "soft dice".into());
        note(gradcheck::check_sum_squares(seed), "sum of squares".into());
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(worst < 1e-4 && secs < 120.0, format!("max relative error {worst:.2e} ({worst_at}), {secs:.1} s"))
}

// ---------------------------------------------------------------- criterion 2

fn loss_identities() -> Outcome {
    let mut rng = RngStream::new(2, 0);
    let spatial = [4, 3, 5];
    let p: usize = spatial.iter().product();
    let mut perfect_max = 0.0f64;
    for k in 1..=6 {
        let labels: Vec<usize> = (0..p).map(|_| rng.index(k)).collect();
        let t: Tensor<f64> = one_hot_indices(&labels, k, spatial);
        perfect_max = perfect_max.max(soft_dice_loss(&t, &t).unwrap().0.abs());
    }
    // half the voxels in each class, prediction 1/2 everywhere
    let half: Vec<usize> = (0..p).map(|v| v % 2).collect();
    let target: Tensor<f64> = one_hot_indices(&half, 2, spatial);
    let uniform = Tensor::from_vec(target.shape(), vec![0.5; target.len()]);
    let u = soft_dice_loss(&uniform, &target).unwrap().0;
    outcome(
        perfect_max == 0.0 && (u - 1.0 / 3.0).abs() < 1e-6,
        format!("perfect prediction loss {perfect_max}, uniform two-class loss {u:.9}"),
    )
}

// ---------------------------------------------------------------- criterion 3

fn toy_overfit() -> Outcome {
    let started = Instant::now();
    let schema = LabelSchema::default_schema();
    let maps = phantom_corpus(4, [32; 3], 300, false);
    let priors = GenPriors::default();
    let pairs: Vec<(Tensor<f32>, Tensor<f32>, LabelVolume)> = maps
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let pair = generate_pair(std::slice::from_ref(m), &priors, &mut RngStream::new(3, i as u64)).unwrap();
            let target = one_hot_indices(&schema.coarse_channels(&pair.labels).unwrap(), CoarseClass::COUNT, [32; 3]);
            (volume_tensor(&pair.image), target, schema.to_coarse(&pair.labels).unwrap())
        })
        .collect();

    let spec = NetworkSpec::segmenter(3, 8, 1, CoarseClass::COUNT);
    let mut net: Network<f32> = build_network(&spec, 3).unwrap();
    let mut adam = AdamState::new(net.weights());
    for step in 0..2000 {
        let (x, t, _) = &pairs[step % pairs.len()];
        let (y, tape) = net.forward(x, Mode::Train).unwrap();
        let (_, g) = soft_dice_loss(&y, t).unwrap();
        let (grads, _) = net.backward(&tape, &g).unwrap();
        adam_step(net.weights_mut(), &grads, &mut adam, 1e-3).unwrap();
    }

    // Scored with the per-image normalization statistics used during training,
    // on a copy so the running moments stay untouched.
    let mut probe = net.clone();
    let (mut losses, mut dices, mut infer_dices) = (Vec::new(), Vec::new(), Vec::new());
    let foreground: Vec<u32> = (1..CoarseClass::COUNT as u32).collect();
    for (x, t, truth) in &pairs {
        let like = truth.map(|_| 0.0f32);
        let y = probe.forward(x, Mode::Train).unwrap().0;
        losses.push(soft_dice_loss(&y, t).unwrap().0);
        let per = dice_per_label(&coarse_labels(&y, &like), truth, &foreground).unwrap();
        dices.push(per.iter().sum::<f64>() / per.len() as f64);
        let per = dice_per_label(&coarse_labels(&net.infer(x).unwrap(), &like), truth, &foreground).unwrap();
        infer_dices.push(per.iter().sum::<f64>() / per.len() as f64);
    }
    let loss = losses.iter().cloned().fold(0.0, f64::max);
    let dice = dices.iter().cloned().fold(1.0, f64::min);
    let secs = started.elapsed().as_secs_f64();
    let infer = infer_dices.iter().sum::<f64>() / infer_dices.len() as f64;
    outcome(
        loss < 0.05 && dice > 0.95 && secs < 1800.0,
        format!(
            "worst pair soft Dice loss {loss:.4}, worst pair macro Dice {dice:.4} \
             (running-moment inference {infer:.4}), {secs:.0} s"
        ),
    )
}

// ------------------------------------------------------- shared toy hierarchy

struct Toy {
    schema: LabelSchema,
    bundle: ModelBundle,
    seconds: f64,
}

fn toy_config(steps: u64) -> TrainConfig {
    TrainConfig { steps, seed: 11, ..TrainConfig::toy() }
}

fn train_toy() -> Toy {
    let started = Instant::now();
    let schema = LabelSchema::default_schema();
    let maps = phantom_corpus(6, TOY_DIMS, 100, true);
    let images: Vec<IntensityVolume> =
        maps.iter().enumerate().map(|(i, m)| phantom_real_image(m, &schema, &mut RngStream::new(12, i as u64))).collect();
    let corpus = PairedCorpus::new(images, maps.clone(), &schema).unwrap();
    let none = TrainOptions::default();

    let s1 = train_segmenter(Stage::S1, &maps, &schema, &toy_config(1500), &none).unwrap().network;
    let s2 = train_segmenter(Stage::S2, &maps, &schema, &toy_config(1500), &none).unwrap().network;
    let s3 = train_segmenter(Stage::S3, &maps, &schema, &toy_config(200), &none).unwrap().network;
    let d = train_denoiser(&s1, &corpus, &schema, &toy_config(800), &none).unwrap().network;
    let upstream = Upstream { s1: &s1, d: &d, s2: &s2 };
    let r = train_regressor(&upstream, &corpus, &schema, &toy_config(600), &none).unwrap().network;
    let bundle = ModelBundle::new(s1, d, s2, s3, r, schema.clone()).unwrap();
    Toy { schema, bundle, seconds: started.elapsed().as_secs_f64() }
}

/// Held-out phantoms rendered as real images and degraded with widened priors.
fn held_out(count: usize, seed: u64, schema: &LabelSchema) -> Vec<(IntensityVolume, LabelVolume)> {
    let priors = GenPriors::default().widened(2.0);
    phantom_corpus(count, TOY_DIMS, seed, true)
        .into_iter()
        .enumerate()
        .map(|(i, labels)| {
            let mut rng = RngStream::new(seed, i as u64);
            let image = phantom_real_image(&labels, schema, &mut rng);
            let d = degrade_real(&image, &priors, &mut rng).unwrap();
            let truth = d.deformation.apply_nearest(&labels);
            (d.image, truth)
        })
        .collect()
}

fn run(scan: &IntensityVolume, toy: &Toy, use_denoiser: bool) -> SegmentationResult {
    segment_with(scan, &toy.bundle, PipelineOptions { qc_threshold: QC_THRESHOLD, use_denoiser }).unwrap()
}

// ---------------------------------------------------------------- criterion 4

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn hierarchy_benefit(toy: &Toy, produced: &mut Vec<SegmentationResult>) -> Outcome {
    let schema = &toy.schema;
    let cases = held_out(20, 900, schema);
    let foreground: Vec<u32> = (1..CoarseClass::COUNT as u32).collect();
    let (mut s1_dice, mut d_dice) = (Vec::new(), Vec::new());
    let (mut with_d, mut without_d, mut truths) = (Vec::new(), Vec::new(), Vec::new());
    for (scan, truth) in &cases {
        let full = run(scan, toy, true);
        let plain = run(scan, toy, false);
        let coarse_truth = schema.to_coarse(truth).unwrap();
        let like = truth.map(|_| 0.0f32);
        let dice = |soft: &Tensor<f32>| mean(&dice_per_label(&coarse_labels(soft, &like), &coarse_truth, &foreground).unwrap());
        s1_dice.push(dice(&full.coarse_soft));
        d_dice.push(dice(&full.denoised_soft));
        with_d.push(full.final_labels.clone());
        without_d.push(plain.final_labels.clone());
        truths.push(truth.clone());
        produced.push(full);
        produced.push(plain);
    }
    let (s1, d) = (mean(&s1_dice), mean(&d_dice));
    let fine_d = evaluate(&with_d, &truths, schema, Level::Fine).unwrap().macro_dice;
    let fine_plain = evaluate(&without_d, &truths, schema, Level::Fine).unwrap().macro_dice;
    outcome(
        d >= s1 && fine_d >= fine_plain,
        format!(
            "coarse Dice S1 {s1:.4} vs D(S1) {d:.4} (margin {:+.4}); fine Dice with D {fine_d:.4} vs without \
             {fine_plain:.4} (margin {:+.4}); toy training {:.0} s",
            d - s1,
            fine_d - fine_plain,
            toy.seconds
        ),
    )
}

// ---------------------------------------------------------------- criterion 5

fn qc_regressor(toy: &Toy, produced: &mut Vec<SegmentationResult>) -> Outcome {
    let schema = &toy.schema;
    let mut errors = Vec::new();
    for (scan, truth) in held_out(50, 950, schema) {
        let result = run(&scan, toy, true);
        let truth_scores = region_dice(&result.final_labels, &truth, schema).unwrap();
        errors.extend(result.qc.scores.iter().zip(truth_scores).map(|(p, t)| (p - t).abs()));
        produced.push(result);
    }
    let mae = mean(&errors);
    let boundary = QcReport::new(&[0.64, 0.65, 0.66], QC_THRESHOLD).per_region_pass;
    let rule = boundary == [false, true, true];
    outcome(mae <= 0.15 && rule, format!("MAE {mae:.4} over {} region scores; 0.64/0.65/0.66 -> {boundary:?}", errors.len()))
}

// ---------------------------------------------------------------- criterion 6

fn statistics_oracles() -> Outcome {
    let mut failures = Vec::new();
    for seed in 0..50 {
        let mut rng = RngStream::new(seed, 0);
        let x = stats_oracles::random_labels(&mut rng, [5, 4, 3], 4);
        let y = stats_oracles::random_labels(&mut rng, [5, 4, 3], 4);
        for label in 0..5 {
            if hard_dice(&x, &y, label).unwrap() != stats_oracles::dice_oracle(&x, &y, label) {
                failures.push(format!("dice seed {seed}"));
            }
        }
    }
    let mut rng = RngStream::new(3, 0);
    for _ in 0..100 {
        let a: Vec<f64> = (0..2 + rng.index(20)).map(|_| rng.normal() * 3.0 + 1.0).collect();
        let b: Vec<f64> = (0..2 + rng.index(20)).map(|_| rng.normal() * 2.0).collect();
        let (d, o) = (cohens_d(&a, &b).unwrap(), stats_oracles::cohens_d_oracle(&a, &b));
        if (d - o).abs() > 1e-9 * o.abs().max(1.0) {
            failures.push("cohen's d".into());
        }
    }
    for (seed, n) in [(0, 2), (1, 17), (2, 250), (3, 1000)] {
        let (s, l) = stats_oracles::random_scored(&mut RngStream::new(seed, 0), n);
        if auc_roc(&s, &l).unwrap().auc != stats_oracles::auc_pairwise(&s, &l) {
            failures.push(format!("auc n={n}"));
        }
    }
    for seed in 0..10 {
        let (vols, cov, beta) = stats_oracles::known_covariate_data(seed, 40);
        let fit = covariate_correct(&vols, &cov).unwrap();
        if fit.coefficients.iter().zip(beta).any(|(g, w)| (g - w).abs() > 1e-6 * w.abs().max(1.0)) {
            failures.push(format!("covariates seed {seed}"));
        }
    }
    let mut worst_rms = 0.0f64;
    for seed in 0..5 {
        let cohort = stats_oracles::known_ageing_cohort(seed, 60);
        let model = ageing_fit(&cohort.table, "hippocampus").unwrap();
        let sq: f64 = cohort
            .table
            .records
            .iter()
            .zip(&cohort.truth)
            .map(|(r, t)| (ageing_predict(&model, r.age, r.gender, r.spacing) - t).powi(2))
            .sum();
        worst_rms = worst_rms.max((sq / cohort.truth.len() as f64).sqrt());
    }
    if !(worst_rms < 1e-6) {
        failures.push(format!("ageing rms {worst_rms:e}"));
    }
    let knots: Vec<f64> = (0..10).map(|i| 18.0 + 8.0 * i as f64).collect();
    let mut rng = RngStream::new(1, 1);
    for _ in 0..200 {
        let x = rng.uniform(18.0, 90.0);
        let (a, b) = (bspline_basis(&knots, x), stats_oracles::cox_de_boor(&knots, x));
        if a.len() != b.len() || a.iter().zip(&b).any(|(u, v)| (u - v).abs() > 1e-9) {
            failures.push("b-spline basis".into());
            break;
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("dice, cohen's d, AUC (up to 1000 points), covariates, basis and ageing agree; ageing rms {worst_rms:.1e}")
        } else {
            format!("mismatches: {}", failures.join(", "))
        },
    )
}

// ---------------------------------------------------------------- criterion 7

fn generator_statistics() -> Outcome {
    let mut worst_mean = 0.0f64;
    let mut worst_std = 0.0f64;
    for seed in 0..3 {
        let m = generator::single_label_moments(seed);
        worst_mean = worst_mean.max((m.sample_mean - m.mean).abs() / m.mean.abs());
        worst_std = worst_std.max(m.std_rel_error());
    }
    let (measured, predicted) = generator::sinusoid_attenuation();
    let blur = (measured / predicted - 1.0).abs();
    outcome(
        worst_mean < 0.01 && worst_std < 0.01 && blur < 0.05,
        format!(
            "mean rel error {worst_mean:.2e}, std rel error {worst_std:.2e}, blur attenuation {measured:.4} vs {predicted:.4} ({:.2}%)",
            100.0 * blur
        ),
    )
}

// ---------------------------------------------------------------- criterion 8

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn synthseg(args: &[&str]) -> bool {
    let out = Command::new(env!("CARGO_BIN_EXE_synthseg")).args(args).output().unwrap();
    if !out.status.success() {
        eprintln!("synthseg {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.success()
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let maps = root.path().join("maps");
    fs::create_dir(&maps).unwrap();
    for (i, m) in phantom_corpus(2, [16; 3], 8, false).iter().enumerate() {
        write_labels(m, maps.join(format!("m{i}.nii.gz"))).unwrap();
    }
    let m = maps.to_str().unwrap();
    let mut notes = Vec::new();
    let mut pass = true;
    for threads in ["1", "2"] {
        let gen = |name: &str| {
            let out = root.path().join(format!("gen_{threads}_{name}"));
            assert!(synthseg(&["--threads", threads, "generate", "--maps", m, "--n", "4", "--seed", "9", "--out", out.to_str().unwrap()]));
            tree(&out)
        };
        let (a, b) = (gen("a"), gen("b"));
        pass &= a == b;
        notes.push(format!("generate x{threads}: {} files {}", a.len(), if a == b { "identical" } else { "DIFFER" }));

        let train = |name: &str| {
            let out = root.path().join(format!("train_{threads}_{name}"));
            let o = out.to_str().unwrap();
            let args = ["--threads", threads, "train", "--role", "s1", "--preset", "toy", "--steps", "4", "--checkpoint-every", "2"];
            assert!(synthseg(&[&args[..], &["--maps", m, "--out", o, "--seed", "9"]].concat()));
            let mut t = tree(&out);
            t.remove(Path::new("s1.timing.jsonl"));
            t
        };
        let (a, b) = (train("a"), train("b"));
        pass &= a == b;
        notes.push(format!("train x{threads}: {} files {}", a.len(), if a == b { "identical" } else { "DIFFER" }));
    }
    outcome(pass, format!("{} (wall-time sidecar excluded)", notes.join("; ")))
}

// ---------------------------------------------------------------- criterion 9

/// Minimal independent reader of the fields a conformant NIfTI-1 header must
/// carry: `sizeof_hdr`, `dim`, `datatype`, `pixdim`, `vox_offset` and `magic`.
struct HeaderDump {
    sizeof_hdr: i32,
    dim: [i16; 8],
    datatype: i16,
    pixdim: [f32; 8],
    vox_offset: f32,
    magic: [u8; 4],
}

fn dump_header(path: &Path) -> HeaderDump {
    let raw = fs::read(path).unwrap();
    let bytes = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        std::io::Read::read_to_end(&mut flate2::read::GzDecoder::new(&raw[..]), &mut out).unwrap();
        out
    } else {
        raw
    };
    let i16_at = |o: usize| i16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    HeaderDump {
        sizeof_hdr: i32::from_le_bytes(bytes[0..4].try_into().unwrap()),
        dim: std::array::from_fn(|i| i16_at(40 + 2 * i)),
        datatype: i16_at(70),
        pixdim: std::array::from_fn(|i| f32_at(76 + 4 * i)),
        vox_offset: f32_at(108),
        magic: bytes[344..348].try_into().unwrap(),
    }
}

fn third_party_file(path: &Path, dims: [usize; 3], spacing: [f32; 3], value: impl Fn(usize, usize, usize) -> f32) {
    let data = ndarray::Array3::from_shape_fn((dims[0], dims[1], dims[2]), |(i, j, k)| value(i, j, k));
    let header = nifti::NiftiHeader {
        pixdim: [1.0, spacing[0], spacing[1], spacing[2], 1.0, 1.0, 1.0, 1.0],
        sform_code: 1,
        srow_x: [spacing[0], 0.0, 0.0, -10.0],
        srow_y: [0.0, spacing[1], 0.0, 4.0],
        srow_z: [0.0, 0.0, spacing[2], 2.5],
        ..Default::default()
    };
    nifti::writer::WriterOptions::new(path).reference_header(&header).write_nifti(&data).unwrap();
}

fn format_fidelity() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let mut rng = RngStream::new(9, 9);
    let grid = Grid3::axis_aligned([7, 5, 3], [0.875, 1.125, 3.0]).unwrap();
    let image: IntensityVolume = Volume::from_fn(grid.clone(), |_, _, _| (rng.normal() * 1e3) as f32);
    let labels: LabelVolume = Volume::from_fn(grid, |i, j, k| [0, 2, 17, 1035, 2035][(i + 2 * j + k) % 5]);
    let mut notes = Vec::new();
    let mut pass = true;
    for ext in ["nii", "nii.gz"] {
        let (ip, lp) = (root.path().join(format!("i.{ext}")), root.path().join(format!("l.{ext}")));
        write_intensity(&image, &ip).unwrap();
        write_labels(&labels, &lp).unwrap();
        let back = read_intensity(&ip).unwrap();
        let same_bits = back.data().iter().zip(image.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        let same = same_bits && back.grid() == image.grid() && read_labels(&lp).unwrap() == labels;
        pass &= same;
        notes.push(format!(".{ext} round trip {}", if same { "bit-exact" } else { "DIFFERS" }));
    }

    let dims = [6, 5, 4];
    let spacing = [0.8f32, 1.25, 2.5];
    let value = |i: usize, j: usize, k: usize| (i + 10 * j + 100 * k) as f32 * 0.5;
    for ext in ["nii", "nii.gz"] {
        let path = root.path().join(format!("third_party.{ext}"));
        third_party_file(&path, dims, spacing, value);
        let dump = dump_header(&path);
        let conformant = dump.sizeof_hdr == 348 && &dump.magic == b"n+1\0" && dump.datatype == 16 && dump.vox_offset >= 352.0;
        let vol = read_intensity(&path).unwrap();
        let header_dims: Vec<usize> = dump.dim[1..=dump.dim[0] as usize].iter().map(|&d| d as usize).collect();
        let dims_ok = dump.dim[0] == 3 && header_dims == vol.dims() && vol.dims() == dims;
        let spacing_ok = (0..3).all(|a| vol.grid().spacing()[a] == dump.pixdim[a + 1] as f64);
        let values_ok = (0..dims[0]).all(|i| (0..dims[1]).all(|j| (0..dims[2]).all(|k| vol.get(i, j, k) == value(i, j, k))));
        let ours = read_header(&path).is_ok();
        let ok = conformant && dims_ok && spacing_ok && values_ok && ours;
        pass &= ok;
        notes.push(format!(
            "third-party .{ext}: dims {:?} spacing {:?} {}",
            vol.dims(),
            vol.grid().spacing(),
            if ok { "match header dump" } else { "MISMATCH" }
        ));
    }
    outcome(pass, notes.join("; "))
}

// --------------------------------------------------------------- criterion 10

fn icv_exactness(produced: &[SegmentationResult], schema: &LabelSchema) -> Outcome {
    let mut exact = 0;
    let mut worst_volume = 0.0f64;
    for result in produced {
        let report = result.volume_report(schema).unwrap();
        let mut icv = 0.0f64;
        for s in schema.structures().iter().filter(|s| s.counts_in_icv) {
            icv += report.volumes[&s.id];
        }
        if icv.to_bits() == report.icv.to_bits() {
            exact += 1;
        }
        let voxel = result.final_labels.grid().voxel_volume();
        for (c, s) in schema.structures().iter().enumerate() {
            let direct: f64 = result.fine_soft.channel(c).iter().map(|&v| v as f64).sum::<f64>() * voxel;
            let got = report.volumes[&s.id];
            worst_volume = worst_volume.max((direct - got).abs() / direct.abs().max(1.0));
        }
    }
    outcome(
        !produced.is_empty() && exact == produced.len() && worst_volume < 1e-9,
        format!(
            "{exact}/{} segmentations with bit-identical ICV; structure volumes within {worst_volume:.1e} of direct soft sums",
            produced.len()
        ),
    )
}

fn main() {
    let mut lines: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |n: usize, name: &'static str, o: Outcome| {
        println!("AC{n:<2} {:<22} {}  {}", name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        let _ = std::io::Write::flush(&mut std::io::stdout());
        lines.push((n, name, o));
    };
    report(1, "gradient correctness", gradient_correctness());
    report(2, "loss identities", loss_identities());
    report(3, "toy overfit", toy_overfit());
    let toy = train_toy();
    let mut produced = Vec::new();
    report(4, "hierarchy benefit", hierarchy_benefit(&toy, &mut produced));
    report(5, "qc regressor", qc_regressor(&toy, &mut produced));
    report(6, "statistics oracles", statistics_oracles());
    report(7, "generator statistics", generator_statistics());
    report(8, "determinism", determinism());
    report(9, "format fidelity", format_fidelity());
    report(10, "icv exactness", icv_exactness(&produced, &toy.schema));

    let failed: Vec<String> = lines.iter().filter(|(_, _, o)| !o.pass).map(|(n, name, _)| format!("AC{n} {name}")).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", lines.len());
    } else {
        println!("acceptance: failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
