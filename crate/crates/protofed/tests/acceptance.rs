//! End-to-end acceptance suite. Each test prints one pass/fail line for its
//! criterion; the slow directional runs live at the bottom.

use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use protofed::config::{CommBaseline, ExperimentConfig, KernelKind};
use protofed::encoder::{
    backward, ce_loss_grad, ema_update, forward, forward_cached, soft_triplet_loss_grad,
    triplet_loss_grad, CeTarget, ClassifierHead, ModelParams,
};
use protofed::evaluation::{evaluate_features, RetrievalSplit};
use protofed::federation::{
    aggregate, client_round, compute_prototypes, ClientState, LocalTrainOpts,
};
use protofed::harness::{run_experiment, run_sweep, SweepAxis};
use protofed::kernel::{Bandwidth, KernelSpec};
use protofed::mat::{sq_dist, FeatureMatrix};
use protofed::mmd::mmd2;
use protofed::pseudolabel::{dbscan, PointLabel};
use protofed::synthgen::generate;
use protofed::testutil::{finite_diff_check, finite_diff_check_vec, random_matrix};

struct Criterion {
    number: usize,
    name: &'static str,
    ok: bool,
}

impl Criterion {
    fn new(number: usize, name: &'static str) -> Self {
        Self {
            number,
            name,
            ok: true,
        }
    }

    fn check(&mut self, ok: bool, detail: &str) {
        if !ok {
            self.ok = false;
            println!("criterion {:02} {}: FAIL ({detail})", self.number, self.name);
        }
        assert!(ok, "criterion {:02} {}: {detail}", self.number, self.name);
    }

    fn finish(self) {
        println!(
            "criterion {:02} {}: {}",
            self.number,
            self.name,
            if self.ok { "pass" } else { "FAIL" }
        );
    }
}

fn all_kernels() -> Vec<KernelSpec<f64>> {
    vec![
        KernelSpec::Linear,
        KernelSpec::PolyDegree2 { offset: 1.0 },
        KernelSpec::Gaussian {
            bandwidth: Bandwidth::Fixed(0.8),
        },
    ]
}

/// Independent brute-force V-statistic: three explicit double sums.
fn mmd2_double_sum(x: &FeatureMatrix<f64>, y: &FeatureMatrix<f64>, k: &KernelSpec<f64>) -> f64 {
    let m = x.rows() as f64;
    let n = y.rows() as f64;
    let mut xx = 0.0;
    let mut yy = 0.0;
    let mut xy = 0.0;
    for a in 0..x.rows() {
        for b in 0..x.rows() {
            xx += k.eval(x.row(a), x.row(b)).unwrap();
        }
    }
    for a in 0..y.rows() {
        for b in 0..y.rows() {
            yy += k.eval(y.row(a), y.row(b)).unwrap();
        }
    }
    for a in 0..x.rows() {
        for b in 0..y.rows() {
            xy += k.eval(x.row(a), y.row(b)).unwrap();
        }
    }
    xx / (m * m) + yy / (n * n) - 2.0 * xy / (m * n)
}

#[test]
fn criterion_01_mmd_oracle() {
    let mut c = Criterion::new(1, "mmd_oracle");
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(101);
    for trial in 0..200 {
        let m = rng.gen_range(1..=8);
        let n = rng.gen_range(1..=8);
        let d = rng.gen_range(1..=4);
        let x = random_matrix(&mut rng, m, d);
        let y = random_matrix(&mut rng, n, d);
        for k in all_kernels() {
            let v = mmd2(&x, &y, &k).unwrap();
            let o = mmd2_double_sum(&x, &y, &k);
            c.check(
                (v - o).abs() < 1e-10,
                &format!("trial {trial} kernel {k:?}: |{v} - {o}|"),
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    c.check(elapsed < 5.0, &format!("took {elapsed:.2} s"));
    c.finish();
}

#[test]
fn criterion_02_gradient_suite() {
    let mut c = Criterion::new(2, "gradient_suite");
    let mut rng = StdRng::seed_from_u64(202);
    let tol = 1e-4;

    // cross-entropy, hard labels: gradient with respect to the features
    for trial in 0..50 {
        let feats = random_matrix(&mut rng, 6, 4);
        let head = {
            let mut h = ClassifierHead::<f64>::zeros(4, 3);
            for w in &mut h.w {
                *w = rng.gen_range(-1.0..1.0);
            }
            h
        };
        let labels: Vec<usize> = (0..6).map(|_| rng.gen_range(0..3)).collect();
        let (_, _, dfeats) = ce_loss_grad(&head, &feats, CeTarget::Hard(&labels)).unwrap();
        let rel = finite_diff_check(
            feats,
            |f| ce_loss_grad(&head, f, CeTarget::Hard(&labels)).unwrap().0,
            dfeats.as_slice(),
        );
        c.check(rel < tol, &format!("ce hard trial {trial}: rel {rel}"));
    }

    // cross-entropy, soft targets
    for trial in 0..50 {
        let feats = random_matrix(&mut rng, 5, 3);
        let head = {
            let mut h = ClassifierHead::<f64>::zeros(3, 4);
            for w in &mut h.w {
                *w = rng.gen_range(-1.0..1.0);
            }
            h
        };
        let mut targets = FeatureMatrix::<f64>::zeros(5, 4);
        for i in 0..5 {
            let raw: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            for (j, &v) in raw.iter().enumerate() {
                targets.set(i, j, v / sum);
            }
        }
        let (_, _, dfeats) = ce_loss_grad(&head, &feats, CeTarget::Soft(&targets)).unwrap();
        let rel = finite_diff_check(
            feats,
            |f| ce_loss_grad(&head, f, CeTarget::Soft(&targets)).unwrap().0,
            dfeats.as_slice(),
        );
        c.check(rel < tol, &format!("ce soft trial {trial}: rel {rel}"));
    }

    // batch-hard triplet
    for trial in 0..50 {
        let feats = random_matrix(&mut rng, 8, 3);
        let labels: Vec<usize> = (0..8).map(|i| i % 4).collect();
        let (_, grad) = triplet_loss_grad(&feats, &labels, 0.3).unwrap();
        let rel = finite_diff_check(
            feats,
            |f| triplet_loss_grad(f, &labels, 0.3).unwrap().0,
            grad.as_slice(),
        );
        c.check(rel < tol, &format!("triplet trial {trial}: rel {rel}"));
    }

    // soft triplet against a fixed teacher
    for trial in 0..50 {
        let feats = random_matrix(&mut rng, 8, 3);
        let teacher = random_matrix(&mut rng, 8, 3);
        let labels: Vec<usize> = (0..8).map(|i| i % 4).collect();
        let (_, grad) = soft_triplet_loss_grad(&feats, &teacher, &labels).unwrap();
        let rel = finite_diff_check(
            feats,
            |f| soft_triplet_loss_grad(f, &teacher, &labels).unwrap().0,
            grad.as_slice(),
        );
        c.check(rel < tol, &format!("soft triplet trial {trial}: rel {rel}"));
    }

    // MMD through the full encoder, gradient with respect to the parameters
    for trial in 0..50 {
        let params = ModelParams::<f64>::random(3, 4, 3, 0.5, &mut rng);
        let data = random_matrix(&mut rng, 5, 3);
        let protos = random_matrix(&mut rng, 4, 3);
        let kernel = all_kernels()[trial % 3];
        let (feats, cache) = forward_cached(&params, &data).unwrap();
        let gfeat = protofed::mmd::mmd2_grad_wrt_x(&feats, &protos, &kernel).unwrap();
        let grads = backward(&params, &cache, &gfeat).unwrap();
        let rel = finite_diff_check_vec(
            params.to_flat(),
            |flat| {
                let p = ModelParams::from_flat(3, 4, 3, flat).unwrap();
                let f = forward(&p, &data).unwrap();
                mmd2(&f, &protos, &kernel).unwrap()
            },
            &grads.to_flat(),
        );
        c.check(rel < tol, &format!("mmd-encoder trial {trial}: rel {rel}"));
    }
    c.finish();
}

#[test]
fn criterion_03_ema_closed_form() {
    let mut c = Criterion::new(3, "ema_closed_form");
    let mut rng = StdRng::seed_from_u64(303);
    let student = ModelParams::<f64>::random(3, 4, 3, 0.7, &mut rng);
    let start = ModelParams::<f64>::random(3, 4, 3, 0.7, &mut rng);
    let dist = |a: &ModelParams<f64>, b: &ModelParams<f64>| -> f64 {
        a.to_flat()
            .iter()
            .zip(b.to_flat())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let d0 = dist(&start, &student);
    for tau in [0.0, 0.5, 0.999] {
        let mut teacher = start.clone();
        for t in 1..=100usize {
            teacher = ema_update(&teacher, &student, tau).unwrap();
            let expect = tau.powi(t as i32) * d0;
            let got = dist(&teacher, &student);
            c.check(
                (got - expect).abs() < 1e-10,
                &format!("tau {tau} t {t}: {got} vs {expect}"),
            );
        }
    }
    c.finish();
}

#[test]
fn criterion_04_aggregation_exactness() {
    let mut c = Criterion::new(4, "aggregation_exactness");
    let mut rng = StdRng::seed_from_u64(404);
    let pseudo = ModelParams::<f64>::random(3, 4, 3, 1.0, &mut rng);
    let a = ModelParams::<f64>::random(3, 4, 3, 1.0, &mut rng);
    let b = ModelParams::<f64>::random(3, 4, 3, 1.0, &mut rng);

    let out = aggregate(&pseudo, &[(a.clone(), 100), (b.clone(), 300)], 1.0).unwrap();
    c.check(out == pseudo, "alpha = 1 not bitwise pseudo");

    let out = aggregate(&pseudo, &[(a.clone(), 100), (b.clone(), 300)], 0.0).unwrap();
    for ((o, x), y) in out.to_flat().iter().zip(a.to_flat()).zip(b.to_flat()) {
        let expect = 0.25 * x + 0.75 * y;
        c.check(
            (o - expect).abs() < 1e-12,
            &format!("alpha = 0 weighting: {o} vs {expect}"),
        );
    }
    c.finish();
}

/// Independent DBSCAN: union-find over mutually reachable core points, border
/// points attached to the lowest-id cluster with a core point within eps.
fn dbscan_union_find(points: &FeatureMatrix<f64>, eps: f64, min_pts: usize) -> Vec<PointLabel> {
    let n = points.rows();
    let within = |i: usize, j: usize| sq_dist(points.row(i), points.row(j)) <= eps * eps;
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| within(i, j)).count() >= min_pts)
        .collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let r = find(parent, parent[x]);
            parent[x] = r;
        }
        parent[x]
    }
    for i in 0..n {
        for j in 0..n {
            if core[i] && core[j] && within(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut ids: HashMap<usize, usize> = HashMap::new();
    let mut labels = vec![PointLabel::Noise; n];
    for i in 0..n {
        if core[i] {
            let root = find(&mut parent, i);
            let next = ids.len();
            let id = *ids.entry(root).or_insert(next);
            labels[i] = PointLabel::Cluster(id);
        }
    }
    for i in 0..n {
        if core[i] {
            continue;
        }
        let mut best: Option<usize> = None;
        for j in 0..n {
            if core[j] && within(i, j) {
                if let PointLabel::Cluster(id) = labels[j] {
                    best = Some(best.map_or(id, |b: usize| b.min(id)));
                }
            }
        }
        if let Some(id) = best {
            labels[i] = PointLabel::Cluster(id);
        }
    }
    labels
}

fn as_clusters(labels: &[PointLabel]) -> BTreeSet<BTreeSet<usize>> {
    let mut map: HashMap<usize, BTreeSet<usize>> = HashMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if let PointLabel::Cluster(id) = l {
            map.entry(id).or_default().insert(i);
        }
    }
    map.into_values().collect()
}

#[test]
fn criterion_05_dbscan_oracle() {
    let mut c = Criterion::new(5, "dbscan_oracle");
    let mut rng = StdRng::seed_from_u64(505);
    for trial in 0..100 {
        let n = rng.gen_range(5..=80);
        let spread = rng.gen_range(1.0..3.0);
        let data: Vec<f64> = (0..n * 2).map(|_| rng.gen_range(0.0..spread)).collect();
        let points = FeatureMatrix::new(data, n, 2).unwrap();
        let eps = rng.gen_range(0.15..0.5);
        let min_pts = rng.gen_range(2..=5);
        let ours = dbscan(&points, eps, min_pts).unwrap();
        let reference = dbscan_union_find(&points, eps, min_pts);
        c.check(
            as_clusters(&ours) == as_clusters(&reference),
            &format!("trial {trial}: partitions differ (n {n}, eps {eps:.3}, min_pts {min_pts})"),
        );
        for i in 0..n {
            c.check(
                (ours[i] == PointLabel::Noise) == (reference[i] == PointLabel::Noise),
                &format!("trial {trial}: noise sets differ at {i}"),
            );
        }
    }
    c.finish();
}

#[test]
fn criterion_06_ppe_accounting() {
    let mut c = Criterion::new(6, "ppe_accounting");
    let mut rng = StdRng::seed_from_u64(606);
    let mut exercised = 0;
    for trial in 0..20 {
        let mut cfg = ExperimentConfig::with_seed(7000 + trial);
        cfg.train.identities_per_batch = rng.gen_range(2..=5);
        cfg.train.images_per_identity = rng.gen_range(2..=4);
        cfg.train.ppe_count = rng.gen_range(1..=4);
        cfg.train.dbscan_eps = rng.gen_range(0.4..0.9);
        cfg.train.dbscan_min_pts = rng.gen_range(2..=3);
        cfg.synth.num_source_ids = rng.gen_range(5..=10);
        cfg.synth.num_target_ids = rng.gen_range(5..=10);
        cfg.synth.cameras = 2;
        cfg.synth.samples_per_id_per_camera = rng.gen_range(4..=6);
        cfg.synth.latent_dim = 8;
        cfg.synth.shift_strength = rng.gen_range(0.0..0.4);
        cfg.model.d_hidden = 16;
        cfg.model.d_feat = 8;

        let data = generate(&cfg.synth, 9000 + trial).unwrap();
        let opts = LocalTrainOpts::from_config(&cfg);
        let mut srng = StdRng::seed_from_u64(trial);
        let global = ModelParams::<f64>::random(8, 16, 8, 0.3, &mut srng);
        let protos = compute_prototypes(&global, &data.source).unwrap();
        let mut cs = ClientState {
            client_id: 0,
            raw_data: data.clients[0].data.clone(),
            rng: ChaCha12Rng::seed_from_u64(trial),
        };
        let (_, stats) = client_round(&mut cs, &global, &protos, &opts).unwrap();
        if stats.skipped {
            c.check(stats.steps == 0, &format!("trial {trial}: skipped but stepped"));
            continue;
        }
        exercised += 1;
        let expect =
            cfg.train.ppe_count * stats.k_i.div_ceil(cfg.train.identities_per_batch);
        c.check(
            stats.steps == expect,
            &format!("trial {trial}: {} steps, expected {expect}", stats.steps),
        );
    }
    c.check(exercised >= 15, &format!("only {exercised} configs clustered"));
    c.finish();
}

/// Shared configuration for the directional runs: a short-memory teacher and
/// several passes per round so the global model actually moves in 60 rounds at
/// this scale.
fn directional_config(dir: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::with_seed(7);
    cfg.loss.tau = 0.9;
    cfg.train.ppe_count = 10;
    cfg.train.warmup_steps = 500;
    cfg.output = dir.join("sweep.jsonl").to_str().unwrap().to_string();
    cfg
}

#[test]
fn criterion_07_directional_kernel_ablation() {
    let mut c = Criterion::new(7, "directional_kernel_ablation");
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    // the MMD term needs enough weight to matter against the identity losses
    // at this feature scale; the second-order kernel then also destabilizes,
    // matching its noisy small-batch moment estimates
    let mut cfg = directional_config(dir.path());
    cfg.loss.lambda = 3.0;
    let values: Vec<String> = ["none", "poly2", "gaussian"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = run_sweep(&cfg, SweepAxis::Kernel, &values).unwrap();
    let by_name = |n: &str| rows.iter().find(|r| r.value == n).unwrap().best_map;
    let (none, poly2, gaussian) = (by_name("none"), by_name("poly2"), by_name("gaussian"));
    c.check(
        gaussian > none,
        &format!("gaussian {gaussian:.4} not above none {none:.4}"),
    );
    c.check(
        gaussian - none >= 0.03,
        &format!("gaussian - none = {:.4}, need >= 0.03", gaussian - none),
    );
    c.check(
        poly2 < none,
        &format!("poly2 {poly2:.4} not below none {none:.4}"),
    );
    let elapsed = start.elapsed().as_secs_f64();
    c.check(elapsed < 300.0, &format!("took {elapsed:.1} s"));
    println!(
        "criterion 07 detail: none {none:.4}, poly2 {poly2:.4}, gaussian {gaussian:.4} ({elapsed:.0} s)"
    );
    c.finish();
}

#[test]
fn criterion_08_prototype_fraction_robustness() {
    let mut c = Criterion::new(8, "prototype_fraction_robustness");
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = directional_config(dir.path());
    cfg.loss.lambda = 0.5;
    cfg.train.kernel = KernelKind::Gaussian;
    let values: Vec<String> = ["0.1", "1.0"].iter().map(|s| s.to_string()).collect();
    let rows = run_sweep(&cfg, SweepAxis::ProtoFraction, &values).unwrap();
    let by_name = |n: &str| rows.iter().find(|r| r.value == n).unwrap().best_map;
    let (small, full) = (by_name("0.1"), by_name("1.0"));
    c.check(
        (small - full).abs() <= 0.05,
        &format!("fraction 0.1 gave {small:.4} vs 1.0 at {full:.4}, gap over 5 points"),
    );
    println!("criterion 08 detail: fraction 0.1 {small:.4}, fraction 1.0 {full:.4}");
    c.finish();
}

#[test]
fn criterion_09_communication_model() {
    let mut c = Criterion::new(9, "communication_model");
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::with_seed(909);
    cfg.rounds = 1;
    cfg.train.warmup_steps = 0;
    cfg.output = dir.path().join("single.jsonl").to_str().unwrap().to_string();
    let (_, single) = run_experiment(&cfg).unwrap();

    cfg.train.comm_baseline = CommBaseline::Mmt4;
    cfg.output = dir.path().join("mmt.jsonl").to_str().unwrap().to_string();
    let (_, mmt) = run_experiment(&cfg).unwrap();

    let param_bytes = single.final_params.param_count() as u64 * 8;
    let clients = single.reports[0].per_client.len() as u64;
    c.check(
        single.reports[0].uploaded_bytes == clients * param_bytes,
        "single baseline is not exactly one backbone per client",
    );
    c.check(
        mmt.reports[0].uploaded_bytes == 4 * clients * param_bytes,
        "mmt baseline is not exactly four backbones per client",
    );
    let ratio = mmt.reports[0].uploaded_bytes as f64 / single.reports[0].uploaded_bytes as f64;
    c.check(ratio == 4.0, &format!("upload ratio {ratio}"));
    c.check(
        single.reports[0].prototype_bytes < param_bytes,
        "prototype bytes not below parameter bytes",
    );
    c.finish();
}

#[test]
fn criterion_10_determinism() {
    let mut c = Criterion::new(10, "determinism");
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::with_seed(1010);
    cfg.rounds = 3;
    cfg.train.warmup_steps = 20;
    cfg.synth.num_source_ids = 8;
    cfg.synth.num_target_ids = 8;
    cfg.synth.cameras = 3;
    cfg.synth.latent_dim = 8;
    cfg.model.d_hidden = 16;
    cfg.model.d_feat = 8;
    cfg.output = dir.path().join("a.jsonl").to_str().unwrap().to_string();
    run_experiment(&cfg).unwrap();
    let first = std::fs::read(&cfg.output).unwrap();
    run_experiment(&cfg).unwrap();
    let second = std::fs::read(&cfg.output).unwrap();
    c.check(!first.is_empty(), "empty report file");
    c.check(first == second, "report files differ between identical runs");
    c.finish();
}

/// Definitional per-query average precision, written without reference to the
/// library's ranking code.
fn ap_reference(
    qf: &[f64],
    qid: usize,
    qcam: usize,
    gallery: &FeatureMatrix<f64>,
    gids: &[usize],
    gcams: &[usize],
) -> (f64, bool) {
    let mut entries: Vec<(f64, usize)> = (0..gallery.rows())
        .filter(|&gi| !(gids[gi] == qid && gcams[gi] == qcam))
        .map(|gi| (sq_dist(qf, gallery.row(gi)), gi))
        .collect();
    entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (rank, &(_, gi)) in entries.iter().enumerate() {
        if gids[gi] == qid {
            hits += 1;
            ap += hits as f64 / (rank + 1) as f64;
        }
    }
    (ap / hits as f64, gids[entries[0].1] == qid)
}

#[test]
fn criterion_11_retrieval_oracle() {
    let mut c = Criterion::new(11, "retrieval_oracle");
    let mut rng = StdRng::seed_from_u64(1111);
    for trial in 0..100 {
        let nq = rng.gen_range(3..=8);
        let ng = rng.gen_range(10..=25);
        let d = rng.gen_range(2..=4);
        let ids = rng.gen_range(2..=4);
        let q = random_matrix(&mut rng, nq, d);
        let g = random_matrix(&mut rng, ng, d);
        let qids: Vec<usize> = (0..nq).map(|i| i % ids).collect();
        let qcams: Vec<usize> = (0..nq).map(|_| rng.gen_range(0..2)).collect();
        let mut gids: Vec<usize> = (0..ng).map(|_| rng.gen_range(0..ids)).collect();
        let mut gcams: Vec<usize> = (0..ng).map(|_| rng.gen_range(0..3)).collect();
        // guarantee every query id a cross-camera match
        for id in 0..ids {
            gids[id] = id;
            gcams[id] = 2;
        }
        let split = RetrievalSplit::new(
            q.clone(),
            qids.clone(),
            qcams.clone(),
            g.clone(),
            gids.clone(),
            gcams.clone(),
        )
        .unwrap();
        let (map, rank1) = evaluate_features(&split, &q, &g).unwrap();
        let mut ap_sum = 0.0;
        let mut r1 = 0usize;
        for qi in 0..nq {
            let (ap, hit) = ap_reference(q.row(qi), qids[qi], qcams[qi], &g, &gids, &gcams);
            ap_sum += ap;
            if hit {
                r1 += 1;
            }
        }
        c.check(
            (map - ap_sum / nq as f64).abs() < 1e-12,
            &format!("trial {trial}: mAP {map} vs {}", ap_sum / nq as f64),
        );
        c.check(
            (rank1 - r1 as f64 / nq as f64).abs() < 1e-12,
            &format!("trial {trial}: rank1 {rank1} vs {}", r1 as f64 / nq as f64),
        );
    }

    // perfect features: gallery equals query, all cross-camera
    let q = random_matrix(&mut rng, 5, 3);
    let split = RetrievalSplit::new(
        q.clone(),
        (0..5).collect(),
        vec![0; 5],
        q.clone(),
        (0..5).collect(),
        vec![1; 5],
    )
    .unwrap();
    let (map, rank1) = evaluate_features(&split, &q, &q).unwrap();
    c.check(map == 1.0 && rank1 == 1.0, &format!("perfect case: {map}, {rank1}"));
    c.finish();
}
