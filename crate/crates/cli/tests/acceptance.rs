//! Acceptance suite: one `[PASS]`/`[FAIL]` line per criterion, non-zero exit
//! status if any criterion fails.

use rand::Rng as _;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;
use ueba_cli::{
    cmd_diagnose, cmd_featurize, cmd_stress, cmd_synth, cmd_train, ModelStore, PipelineConfig, MANIFEST_FILE,
};
use ueba_core::autoencoder::{AutoencoderModel, AutoencoderSpec};
use ueba_core::doc2vec::{cosine, train_dbow, Doc2VecParams};
use ueba_core::eval::{
    conditional_affinities, joint_affinities, nearest_neighbor_purity, student_t_affinities, tsne, DetectionCurve,
    TsneConfig,
};
use ueba_core::features::Feature;
use ueba_core::nn::{
    composition_to_graph, gradients, graph_to_composition, loss, Activation, AffineLayer, CompositionNet, DenseLayer,
};
use ueba_core::rng::{child_rng, Rng};
use ueba_core::synth::{build_test_set, interpolate, AnomalyType, IntensityGrid, ZSampling};
use ueba_core::Matrix;

// 1. Calibration.
const C1_MIN_TRAIN_WINDOWS: usize = 5_000;
const C1_MIN_HOLDOUT_ROWS: usize = 1_000;
const C1_RATE_RANGE: (f64, f64) = (0.035, 0.065);
const C1_MAX_SECONDS: f64 = 600.0;

// 2. Composition/graph equivalence.
const C2_NETWORKS: usize = 50;
const C2_INPUTS: usize = 100;
const C2_DEPTH: (usize, usize) = (2, 5);
const C2_MAX_WIDTH: usize = 16;
const C2_SUP_TOL: f64 = 1e-12;
const C2_MAX_SECONDS: f64 = 10.0;

// 3. Gradients.
const C3_PARAMS: usize = 20;
const C3_BATCH: usize = 16;
const C3_L1: f64 = 0.001;
const C3_STEP: f64 = 1e-5;
const C3_REL_TOL: f64 = 1e-4;
/// Gradients below this magnitude on both sides count as agreeing.
const C3_ABS_FLOOR: f64 = 1e-10;
/// Weights this close to zero are skipped: |w| has a kink there.
const C3_KINK_MARGIN: f64 = 1e-3;
const C3_MAX_SECONDS: f64 = 30.0;

// 4. Interpolation.
const C4_ROWS: usize = 1_000;

// 5. Detection against intensity.
/// Rows per (template, intensity) used to estimate the curves.
const C5_DRAWS: usize = 20;
const C5_HIGH_BAND_MIN: f64 = 0.9;
const C5_LOW_BAND_MAX: f64 = 0.15;
const C5_RELIABLE_MIN: f64 = 0.9;
const LAMBDA_EPS: f64 = 1e-9;

// 7. t-SNE.
const C7_CLUSTERS: usize = 3;
const C7_PER_CLUSTER: usize = 100;
const C7_DIM: usize = 10;
const C7_SEPARATION: f64 = 10.0;
const C7_NORM_TOL: f64 = 1e-9;
const C7_MIN_PURITY: f64 = 0.9;
const C7_MAX_SECONDS: f64 = 60.0;

// 8. Doc2Vec.
const C8_SEEDS: u64 = 30;
const C8_MIN_WINS: usize = 28;
const C8_VOCAB: usize = 200;
const C8_BASES: usize = 20;
const C8_DOC_LEN: usize = 10;
const C8_MIN_OVERLAP: f64 = 0.8;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }

    fn fail(detail: impl std::fmt::Display) -> Self {
        Self::new(false, format!("error: {detail}"))
    }
}

fn report(id: u8, name: &str, o: &Outcome) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("[{tag}] C{id} {name}: {}", o.detail);
}

fn main() {
    let work = tempfile::tempdir().expect("temp dir");
    let pipeline = Pipeline::run(work.path());
    let results = [
        (1, "calibration", pipeline.as_ref().map_or_else(Outcome::fail, c1)),
        (2, "composition/graph equivalence", c2()),
        (3, "gradient correctness", c3()),
        (
            4,
            "interpolation exactness",
            pipeline.as_ref().map_or_else(Outcome::fail, c4),
        ),
        (
            5,
            "detection vs intensity",
            pipeline.as_ref().map_or_else(Outcome::fail, c5),
        ),
        (6, "explainability", pipeline.as_ref().map_or_else(Outcome::fail, c6)),
        (7, "t-SNE", c7()),
        (8, "doc2vec overlap similarity", c8()),
        (9, "determinism", c9(work.path())),
    ];
    let mut failed = 0;
    for (id, name, o) in &results {
        report(*id, name, o);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// Shared pipeline run (criteria 1, 4, 5, 6).

struct Pipeline {
    cfg: PipelineConfig,
    store: PathBuf,
    train: ueba_cli::TrainSummary,
    seconds: f64,
    stress: ueba_cli::StressSummary,
    single_draw: Vec<DetectionCurve>,
}

impl Pipeline {
    fn run(root: &Path) -> Result<Self, ueba_cli::CliError> {
        let cfg = PipelineConfig::default();
        let data = root.join("c1");
        let store = data.join("store");
        let start = Instant::now();
        let synth = cmd_synth(&cfg, &data)?;
        let feats = cmd_featurize(&cfg, &synth.events_path, Some(&synth.roles_path), None, &data)?;
        let train = cmd_train(&cfg, &feats.windows_path, &store)?;
        let seconds = start.elapsed().as_secs_f64();

        let mut stress_cfg = cfg.clone();
        stress_cfg.stress.draws = C5_DRAWS;
        let stress = cmd_stress(&store, &stress_cfg, None, &data.join("stress"))?;
        let single = cmd_stress(&store, &cfg, None, &data.join("stress_single"))?;
        Ok(Self {
            cfg,
            store,
            train,
            seconds,
            stress,
            single_draw: single.curves,
        })
    }
}

fn c1(p: &Pipeline) -> Outcome {
    let t = &p.train;
    let trained = t.training_rows + t.validation_rows;
    let rate = t.holdout_positive_rate;
    let pass = trained >= C1_MIN_TRAIN_WINDOWS
        && t.holdout_rows >= C1_MIN_HOLDOUT_ROWS
        && (C1_RATE_RANGE.0..=C1_RATE_RANGE.1).contains(&rate)
        && p.seconds <= C1_MAX_SECONDS;
    Outcome::new(
        pass,
        format!(
            "{trained} training windows, held-out positive rate {:.2}% on {} rows (want [{:.1}%, {:.1}%]), \
             tau {:.4}, {:.1}s",
            100.0 * rate,
            t.holdout_rows,
            100.0 * C1_RATE_RANGE.0,
            100.0 * C1_RATE_RANGE.1,
            t.threshold,
            p.seconds
        ),
    )
}

// ---------------------------------------------------------------------------
// 2.

fn random_net(rng: &mut Rng) -> CompositionNet {
    let depth = rng.random_range(C2_DEPTH.0..=C2_DEPTH.1);
    let widths: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=C2_MAX_WIDTH)).collect();
    let layers = widths
        .windows(2)
        .map(|w| {
            let weights = (0..w[0] * w[1]).map(|_| rng.random_range(-1.0..1.0)).collect();
            let bias = (0..w[1]).map(|_| rng.random_range(-0.5..0.5)).collect();
            let acts = (0..w[1])
                .map(|_| Activation::ALL[rng.random_range(0..Activation::ALL.len())])
                .collect();
            DenseLayer::new(AffineLayer::new(w[0], w[1], weights, bias).unwrap(), acts).unwrap()
        })
        .collect();
    CompositionNet::new(layers).unwrap()
}

fn c2() -> Outcome {
    let start = Instant::now();
    let mut rng = child_rng(2, "acceptance/networks");
    let mut sup: f64 = 0.0;
    let mut round_trips = 0;
    for _ in 0..C2_NETWORKS {
        let net = random_net(&mut rng);
        let graph = composition_to_graph(&net);
        for _ in 0..C2_INPUTS {
            let x: Vec<f64> = (0..net.input_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let a = net.forward(&x).unwrap();
            let b = graph.forward(&x).unwrap();
            sup = a.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(sup, f64::max);
        }
        let back = graph_to_composition(&graph).unwrap();
        if composition_to_graph(&back) == graph && back.flat_params() == net.flat_params() {
            round_trips += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        sup <= C2_SUP_TOL && round_trips == C2_NETWORKS && secs <= C2_MAX_SECONDS,
        format!(
            "sup |composition - graph| = {sup:.2e} over {C2_NETWORKS} nets x {C2_INPUTS} inputs (tol {C2_SUP_TOL:e}), \
             {round_trips}/{C2_NETWORKS} exact round trips, {secs:.2}s"
        ),
    )
}

// ---------------------------------------------------------------------------
// 3.

fn c3() -> Outcome {
    let start = Instant::now();
    let net = AutoencoderModel::build(AutoencoderSpec::default(), 3)
        .unwrap()
        .network();
    let mut rng = child_rng(3, "acceptance/gradients");
    let dim = net.input_dim();
    let x = Matrix::from_vec(
        C3_BATCH,
        dim,
        (0..C3_BATCH * dim).map(|_| rng.random::<f64>()).collect(),
    );
    let (_, grads) = gradients(&net, &x, &x, C3_L1).unwrap();
    let analytic = grads.flatten();
    let params = net.flat_params();

    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < C3_PARAMS {
        let k = rng.random_range(0..params.len());
        if params[k] != 0.0 && params[k].abs() < C3_KINK_MARGIN {
            continue;
        }
        let probe = |delta: f64| {
            let mut p = params.clone();
            p[k] += delta;
            let mut n = net.clone();
            n.set_flat_params(&p).unwrap();
            loss(&n, &x, &x, C3_L1).unwrap().total()
        };
        let fd = (probe(C3_STEP) - probe(-C3_STEP)) / (2.0 * C3_STEP);
        let scale = fd.abs().max(analytic[k].abs());
        let err = if scale < C3_ABS_FLOOR {
            0.0
        } else {
            (fd - analytic[k]).abs() / scale
        };
        worst = worst.max(err);
        checked += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        worst < C3_REL_TOL && secs <= C3_MAX_SECONDS,
        format!(
            "max relative error {worst:.2e} over {C3_PARAMS} of {} parameters (h {C3_STEP:e}, tol {C3_REL_TOL:e}), {secs:.2}s",
            params.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 4.

fn c4(p: &Pipeline) -> Outcome {
    let s = match ModelStore::load(&p.store) {
        Ok(s) => s,
        Err(e) => return Outcome::fail(e),
    };
    let set = match build_test_set(
        &s.holdout,
        &s.templates,
        &IntensityGrid::default(),
        p.cfg.stage_seed("stress"),
        ZSampling::PerLambda,
    ) {
        Ok(set) => set,
        Err(e) => return Outcome::fail(e),
    };
    let mut exact = true;
    for (i, z) in s.holdout.iter_rows().take(50).enumerate() {
        let a = &s.templates[i % s.templates.len()].point;
        exact &= interpolate(z, a, 0.0).unwrap() == z && interpolate(z, a, 1.0).unwrap() == *a;
    }
    for (row, label) in set.rows.iter_rows().zip(&set.labels) {
        if label.lambda == 1.0 {
            let t = s.templates.iter().find(|t| t.id == label.template_id).unwrap();
            exact &= row == t.point.as_slice();
        }
    }
    let per_template = (set.len() == C4_ROWS).then(|| {
        let mut counts = BTreeMap::new();
        for l in &set.labels {
            *counts.entry(l.template_id).or_insert(0usize) += 1;
        }
        counts.values().all(|&c| c == 100) && counts.len() == 10
    });
    Outcome::new(
        exact && per_template == Some(true),
        format!(
            "endpoints bit-exact: {exact}; default set has {} rows across {} templates (want {C4_ROWS} = 10 x 100)",
            set.len(),
            s.templates.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 5.

fn curve(curves: &[DetectionCurve], kind: AnomalyType) -> Option<&DetectionCurve> {
    curves.iter().find(|c| c.kind == kind)
}

fn bands(c: &DetectionCurve) -> [f64; 4] {
    let m = |f: &dyn Fn(f64) -> bool| c.mean_rate(f).unwrap_or(f64::NAN);
    [
        m(&|l| l >= 0.8 - LAMBDA_EPS),
        m(&|l| l <= 0.1 + LAMBDA_EPS),
        m(&|l| l > 0.7 + LAMBDA_EPS),
        m(&|l| l > 0.2 + LAMBDA_EPS),
    ]
}

fn c5(p: &Pipeline) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in AnomalyType::ALL {
        let Some(c) = curve(&p.stress.curves, kind) else {
            return Outcome::fail(format!("no {kind} curve"));
        };
        let [high, low, reliable, early] = bands(c);
        let at_one = c.rate_at(1.0).unwrap_or(f64::NAN);
        pass &= high >= C5_HIGH_BAND_MIN && low <= C5_LOW_BAND_MAX && reliable >= C5_RELIABLE_MIN;
        if kind != AnomalyType::Process {
            pass &= at_one == 1.0;
        }
        let mut part = format!("{kind} [0.8,1]={high:.3} [0,0.1]={low:.3} (0.7,1]={reliable:.3}");
        if matches!(kind, AnomalyType::Login | AnomalyType::Antivirus) {
            pass &= early >= C5_RELIABLE_MIN;
            part.push_str(&format!(" (0.2,1]={early:.3}"));
        }
        part.push_str(&format!(" @1={at_one:.2}"));
        parts.push(part);
    }
    let single: Vec<String> = AnomalyType::ALL
        .iter()
        .filter_map(|&k| curve(&p.single_draw, k))
        .map(|c| {
            let b = bands(c);
            format!("{} {:.2}/{:.2}", c.kind, b[0], b[1])
        })
        .collect();
    Outcome::new(
        pass,
        format!(
            "{C5_DRAWS} draws per (template, lambda): {}; single-draw set [0.8,1]/[0,0.1]: {}",
            parts.join("; "),
            single.join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 6.

fn c6(p: &Pipeline) -> Outcome {
    use Feature::*;
    let sent = [SentEmails, SentEmailsSize, SentEmailFiles, SentEmailLinks];
    let login_av = [
        NumLogins,
        AvgSecBetLogins,
        NumFLogins,
        AvgSecBetFLogins,
        NumAntivirusAlerts,
    ];
    let errs = &p.stress.full_intensity_errors;
    let (Some(email), Some(login)) = (errs.get(&AnomalyType::Email), errs.get(&AnomalyType::Login)) else {
        return Outcome::fail("missing full-intensity rows");
    };
    let (e, l) = (email.argmax_named(), login.argmax_named());
    Outcome::new(
        sent.contains(&e) && login_av.contains(&l),
        format!("email argmax {}, login argmax {}", e.name(), l.name()),
    )
}

// ---------------------------------------------------------------------------
// 7.

fn c7() -> Outcome {
    let start = Instant::now();
    let mut rng = child_rng(7, "acceptance/gaussians");
    let n = C7_CLUSTERS * C7_PER_CLUSTER;
    let mut data = Vec::with_capacity(n * C7_DIM);
    let mut labels = Vec::with_capacity(n);
    for c in 0..C7_CLUSTERS {
        for _ in 0..C7_PER_CLUSTER {
            for d in 0..C7_DIM {
                let centre = if d == c { C7_SEPARATION } else { 0.0 };
                // Sum of 12 uniforms: a unit-variance bell curve.
                let g: f64 = (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0;
                data.push(centre + g);
            }
            labels.push(c);
        }
    }
    let x = Matrix::from_vec(n, C7_DIM, data);
    let cfg = TsneConfig {
        seed: 7,
        ..TsneConfig::default()
    };
    let p = match conditional_affinities(&x, cfg.perplexity) {
        Ok(c) => joint_affinities(&c),
        Err(e) => return Outcome::fail(e),
    };
    let map = match tsne(&x, &cfg) {
        Ok(m) => m,
        Err(e) => return Outcome::fail(e),
    };
    let q = student_t_affinities(&map.points);
    let p_sum: f64 = p.as_slice().iter().sum();
    let q_sum: f64 = q.as_slice().iter().sum();
    let trace_ok = map.kl_trace.iter().all(|&k| k >= 0.0) && map.kl_trace.last() < map.kl_trace.first();
    let purity = nearest_neighbor_purity(&map.points, &labels);
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        (p_sum - 1.0).abs() <= C7_NORM_TOL
            && (q_sum - 1.0).abs() <= C7_NORM_TOL
            && trace_ok
            && purity >= C7_MIN_PURITY
            && secs <= C7_MAX_SECONDS,
        format!(
            "|sum P - 1| = {:.1e}, |sum Q - 1| = {:.1e}, KL {:.4} -> {:.4}, 1-NN purity {purity:.3} at n = {n}, {secs:.1}s",
            (p_sum - 1.0).abs(),
            (q_sum - 1.0).abs(),
            map.kl_trace.first().copied().unwrap_or(f64::NAN),
            map.kl_trace.last().copied().unwrap_or(f64::NAN),
        ),
    )
}

// ---------------------------------------------------------------------------
// 8.

/// Shared tokens over the larger document's distinct-token count.
fn overlap(a: &[String], b: &[String]) -> f64 {
    let shared = a.iter().filter(|t| b.contains(t)).count();
    shared as f64 / a.len().max(b.len()) as f64
}

fn c8() -> Outcome {
    let mut rng = child_rng(8, "acceptance/corpus");
    let token = |i: usize| format!("proc{i:03}.exe");
    let mut corpus: Vec<Vec<String>> = Vec::new();
    for _ in 0..C8_BASES {
        let picks = ueba_core::rng::permutation(C8_VOCAB, &mut rng);
        let base: Vec<String> = picks[..C8_DOC_LEN].iter().map(|&i| token(i)).collect();
        let mut variant = base.clone();
        variant[rng.random_range(0..C8_DOC_LEN)] = token(picks[C8_DOC_LEN]);
        corpus.push(base);
        corpus.push(variant);
    }
    let mut close = Vec::new();
    let mut disjoint = Vec::new();
    for i in 0..corpus.len() {
        for j in i + 1..corpus.len() {
            let o = overlap(&corpus[i], &corpus[j]);
            if o >= C8_MIN_OVERLAP {
                close.push((i, j));
            } else if o == 0.0 {
                disjoint.push((i, j));
            }
        }
    }
    let mut wins = 0;
    for seed in 0..C8_SEEDS {
        let params = Doc2VecParams {
            dim: 32,
            seed,
            ..Doc2VecParams::default()
        };
        let model = match train_dbow(&corpus, &params) {
            Ok((m, _)) => m,
            Err(e) => return Outcome::fail(e),
        };
        let mean = |pairs: &[(usize, usize)]| {
            pairs
                .iter()
                .map(|&(i, j)| cosine(model.doc_vectors.row(i), model.doc_vectors.row(j)))
                .sum::<f64>()
                / pairs.len() as f64
        };
        if mean(&close) > mean(&disjoint) {
            wins += 1;
        }
    }
    Outcome::new(
        wins >= C8_MIN_WINS && !close.is_empty() && !disjoint.is_empty(),
        format!(
            "overlapping pairs closer than disjoint pairs in {wins}/{C8_SEEDS} seeds (want >= {C8_MIN_WINS}); \
             {} overlapping and {} disjoint pairs",
            close.len(),
            disjoint.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 9.

fn full_run(cfg: &PipelineConfig, root: &Path) -> Result<(), ueba_cli::CliError> {
    let data = root.join("data");
    let store = root.join("store");
    let synth = cmd_synth(cfg, &data)?;
    let feats = cmd_featurize(cfg, &synth.events_path, Some(&synth.roles_path), None, &data)?;
    cmd_train(cfg, &feats.windows_path, &store)?;
    cmd_featurize(
        cfg,
        &synth.events_path,
        Some(&synth.roles_path),
        Some(&store),
        &root.join("featurized"),
    )?;
    cmd_stress(&store, cfg, None, &root.join("stress"))?;
    cmd_diagnose(
        &store,
        cfg,
        None,
        Some(&root.join("stress").join("stress_set.csv")),
        &root.join("report"),
    )?;
    Ok(())
}

/// Relative path to contents of every CSV and manifest below `root`.
fn compared_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv")
                || path.file_name().is_some_and(|n| n == MANIFEST_FILE)
            {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn c9(work: &Path) -> Outcome {
    let mut cfg = PipelineConfig {
        seed: 9,
        ..PipelineConfig::default()
    };
    cfg.synth.users = 8;
    cfg.synth.days = 14;
    cfg.diagnose.max_points = 150;
    let (a, b) = (work.join("c9a"), work.join("c9b"));
    for dir in [&a, &b] {
        if let Err(e) = full_run(&cfg, dir) {
            return Outcome::fail(e);
        }
    }
    let (fa, fb) = (compared_files(&a), compared_files(&b));
    let differing: Vec<String> = fa
        .keys()
        .chain(fb.keys())
        .filter(|k| fa.get(*k) != fb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    let manifests = fa.keys().filter(|k| k.ends_with(MANIFEST_FILE)).count();
    Outcome::new(
        differing.is_empty() && manifests == 1 && fa.len() > manifests,
        if differing.is_empty() {
            format!(
                "{} CSV files and {manifests} store manifest byte-identical across two runs",
                fa.len() - manifests
            )
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}
