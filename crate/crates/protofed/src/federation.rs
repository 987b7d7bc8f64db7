//! The round-based protocol: prototype computation and sub-sampling, the
//! pseudo-client and camera-client local training loops, weighted aggregation,
//! communication accounting, and the full federation driver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::config::{CommBaseline, ExperimentConfig, KernelKind, MmdMode, ProtoSource, Transmit};
use crate::encoder::{
    backward, ce_loss_grad, ema_update, ema_update_head, forward, forward_cached, sgd_step,
    sgd_step_head, soft_triplet_loss_grad, triplet_loss_grad, CeTarget, ClassifierHead,
    ModelParams,
};
use crate::error::{Error, Result};
use crate::evaluation::evaluate;
use crate::kernel::KernelSpec;
use crate::mat::{dot, FeatureMatrix};
use crate::mmd::{mmd2, mmd2_grad_wrt_x};
use crate::pseudolabel::{build_pseudo_dataset, dbscan, pk_sample, ppe_iterations, PseudoDataset};
use crate::synthgen::{generate, SourceDomain, SynthOutput};

pub const BYTES_PER_ENTRY: u64 = 8;

/// Per-identity mean source features, ordered by ascending identity id.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    pub prototypes: FeatureMatrix<f64>,
    pub identity_ids: Vec<usize>,
}

impl PrototypeSet {
    pub fn len(&self) -> usize {
        self.identity_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.identity_ids.is_empty()
    }
}

/// Mean encoder feature per source identity, computed with `params`.
pub fn compute_prototypes(
    params: &ModelParams<f64>,
    source: &SourceDomain,
) -> Result<PrototypeSet> {
    let feats = forward(params, &source.data)?;
    let d = feats.cols();
    let k = source.num_ids;
    let mut sums = vec![vec![0.0f64; d]; k];
    let mut counts = vec![0usize; k];
    for (i, &label) in source.labels.iter().enumerate() {
        if label >= k {
            return Err(Error::InvalidArgument(format!(
                "source label {label} out of range for {k} identities"
            )));
        }
        for (s, &f) in sums[label].iter_mut().zip(feats.row(i)) {
            *s += f;
        }
        counts[label] += 1;
    }
    let mut rows = Vec::with_capacity(k);
    for (id, (sum, &count)) in sums.iter().zip(&counts).enumerate() {
        if count == 0 {
            return Err(Error::InvalidArgument(format!(
                "source identity {id} has no samples"
            )));
        }
        rows.push(sum.iter().map(|s| s / count as f64).collect::<Vec<_>>());
    }
    Ok(PrototypeSet {
        prototypes: FeatureMatrix::from_rows(&rows)?,
        identity_ids: (0..k).collect(),
    })
}

/// Keep max(1, round(fraction * K)) prototypes chosen uniformly without
/// replacement; the kept rows stay in ascending identity order.
pub fn subsample_prototypes<R: Rng>(
    ps: &PrototypeSet,
    fraction: f64,
    rng: &mut R,
) -> Result<PrototypeSet> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(
            "proto_fraction must be in (0, 1]".into(),
        ));
    }
    let k = ps.len();
    let keep = ((fraction * k as f64).round() as usize).clamp(1, k);
    if keep == k {
        return Ok(ps.clone());
    }
    let mut order: Vec<usize> = (0..k).collect();
    for i in 0..keep {
        let j = rng.gen_range(i..k);
        order.swap(i, j);
    }
    let mut chosen: Vec<usize> = order[..keep].to_vec();
    chosen.sort_unstable();
    Ok(PrototypeSet {
        prototypes: ps.prototypes.select_rows(&chosen),
        identity_ids: chosen.iter().map(|&i| ps.identity_ids[i]).collect(),
    })
}

/// Running communication totals; cost model is 8 bytes per parameter or
/// feature entry.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommLedger {
    pub total_uploaded: u64,
    pub total_downloaded: u64,
    pub total_prototype: u64,
}

impl CommLedger {
    pub fn record_round(&mut self, uploaded: u64, downloaded: u64, prototype: u64) {
        self.total_uploaded += uploaded;
        self.total_downloaded += downloaded;
        self.total_prototype += prototype;
    }
}

/// One camera's state across rounds.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: usize,
    pub raw_data: FeatureMatrix<f64>,
    pub rng: ChaCha12Rng,
}

/// Knobs shared by the two local training loops.
#[derive(Debug, Clone)]
pub struct LocalTrainOpts {
    pub lr: f64,
    pub tau: f64,
    pub margin: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub lambda: f64,
    pub identities_per_batch: usize,
    pub images_per_identity: usize,
    pub ppe_count: usize,
    pub kernel: KernelKind,
    pub mmd_mode: MmdMode,
    pub transmit: Transmit,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
}

impl LocalTrainOpts {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            lr: cfg.train.lr,
            tau: cfg.loss.tau,
            margin: cfg.loss.margin,
            beta1: cfg.loss.beta1,
            beta2: cfg.loss.beta2,
            gamma1: cfg.loss.gamma1,
            gamma2: cfg.loss.gamma2,
            lambda: cfg.loss.lambda,
            identities_per_batch: cfg.train.identities_per_batch,
            images_per_identity: cfg.train.images_per_identity,
            ppe_count: cfg.train.ppe_count,
            kernel: cfg.train.kernel,
            mmd_mode: cfg.train.mmd_mode,
            transmit: cfg.train.transmit,
            dbscan_eps: cfg.train.dbscan_eps,
            dbscan_min_pts: cfg.train.dbscan_min_pts,
        }
    }

    fn kernel_spec(&self) -> Option<KernelSpec<f64>> {
        match self.kernel {
            KernelKind::None => None,
            KernelKind::Linear => Some(KernelSpec::Linear),
            KernelKind::Poly2 => Some(KernelSpec::PolyDegree2 { offset: 1.0 }),
            KernelKind::Gaussian => Some(KernelSpec::gaussian_median()),
        }
    }
}

/// Per-round client metrics, serialized into the round report.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClientRoundStats {
    pub client_id: usize,
    pub k_i: usize,
    pub steps: usize,
    pub loss_ce: f64,
    pub loss_tri: f64,
    pub loss_mmd: f64,
    pub skipped: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RoundReport {
    pub round: usize,
    pub per_client: Vec<ClientRoundStats>,
    pub pseudo_client_loss: f64,
    pub uploaded_bytes: u64,
    pub downloaded_bytes: u64,
    pub prototype_bytes: u64,
    pub map: f64,
    pub rank1: f64,
}

/// Classifier head initialized from L2-normalized class centroids.
fn centroid_head(features: &FeatureMatrix<f64>, labels: &[usize], k: usize) -> ClassifierHead<f64> {
    let d = features.cols();
    let mut sums = vec![vec![0.0f64; d]; k];
    let mut counts = vec![0usize; k];
    for (i, &label) in labels.iter().enumerate() {
        for (s, &f) in sums[label].iter_mut().zip(features.row(i)) {
            *s += f;
        }
        counts[label] += 1;
    }
    let mut head = ClassifierHead::zeros(d, k);
    for (c, (sum, &count)) in sums.iter().zip(&counts).enumerate() {
        if count == 0 {
            continue;
        }
        let norm = dot(sum, sum).sqrt();
        for (j, &s) in sum.iter().enumerate() {
            head.w[j * k + c] = if norm > 0.0 { s / norm } else { 0.0 };
        }
    }
    head
}

struct LoopAccum {
    steps: usize,
    loss_ce: f64,
    loss_tri: f64,
    loss_mmd: f64,
}

/// The shared teacher-student optimization loop over one round's iterations.
///
/// `protos` is `None` for the pseudo-client (no alignment term).
#[allow(clippy::too_many_arguments)]
fn train_loop(
    data: &FeatureMatrix<f64>,
    ds: &PseudoDataset,
    global: &ModelParams<f64>,
    protos: Option<&PrototypeSet>,
    opts: &LocalTrainOpts,
    rng: &mut ChaCha12Rng,
) -> Result<(ModelParams<f64>, LoopAccum)> {
    let mut student = global.clone();
    let mut teacher = global.clone();

    let init_feats = forward(&student, data)?;
    let kept = init_feats.select_rows(&ds.sample_indices);
    let mut head = centroid_head(&kept, &ds.pseudo_labels, ds.k);
    let mut teacher_head = head.clone();

    let p_iters = ppe_iterations(ds.k, opts.identities_per_batch)?;
    let kernel = opts.kernel_spec();
    let mut acc = LoopAccum {
        steps: 0,
        loss_ce: 0.0,
        loss_tri: 0.0,
        loss_mmd: 0.0,
    };

    for _ppe in 0..opts.ppe_count {
        for _it in 0..p_iters {
            let batch = pk_sample(
                ds,
                opts.identities_per_batch,
                opts.images_per_identity,
                rng,
            )?;
            let indices: Vec<usize> = batch.iter().map(|&(i, _)| i).collect();
            let labels: Vec<usize> = batch.iter().map(|&(_, c)| c).collect();
            let input = data.select_rows(&indices);

            let (feats, cache) = forward_cached(&student, &input)?;
            let teacher_feats = forward(&teacher, &input)?;

            let mut grad_feats = FeatureMatrix::zeros(feats.rows(), feats.cols());
            let mut head_grad = ClassifierHead::zeros(head.d_feat, head.num_classes);
            let add_feat_grad = |dst: &mut FeatureMatrix<f64>, src: &FeatureMatrix<f64>, w: f64| {
                for (d, &s) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
                    *d += w * s;
                }
            };

            // hard cross-entropy on (pseudo-)labels
            let (ce_hard, dhead_h, dfeat_h) = ce_loss_grad(&head, &feats, CeTarget::Hard(&labels))?;
            add_feat_grad(&mut grad_feats, &dfeat_h, opts.beta1);
            for (g, &s) in head_grad.w.iter_mut().zip(&dhead_h.w) {
                *g += opts.beta1 * s;
            }

            // soft cross-entropy against the teacher's prediction
            let teacher_logits = teacher_head.logits(&teacher_feats)?;
            let soft_targets = softmax_rows(&teacher_logits);
            let (ce_soft, dhead_s, dfeat_s) =
                ce_loss_grad(&head, &feats, CeTarget::Soft(&soft_targets))?;
            add_feat_grad(&mut grad_feats, &dfeat_s, opts.beta2);
            for (g, &s) in head_grad.w.iter_mut().zip(&dhead_s.w) {
                *g += opts.beta2 * s;
            }

            // hard triplet and teacher-consistency triplet
            let (tri_hard, dfeat_tri) = triplet_loss_grad(&feats, &labels, opts.margin)?;
            add_feat_grad(&mut grad_feats, &dfeat_tri, opts.gamma1);
            let (tri_soft, dfeat_stri) = soft_triplet_loss_grad(&feats, &teacher_feats, &labels)?;
            add_feat_grad(&mut grad_feats, &dfeat_stri, opts.gamma2);

            let mut loss_mmd = 0.0;
            let mut full_grads: Option<ModelParams<f64>> = None;
            if let (Some(kspec), Some(ps)) = (&kernel, protos) {
                if opts.lambda > 0.0 && !ps.is_empty() {
                    // prototype subset of size min(m, K), fresh each iteration
                    let m = feats.rows();
                    let take = m.min(ps.len());
                    let mut order: Vec<usize> = (0..ps.len()).collect();
                    for i in 0..take {
                        let j = rng.gen_range(i..ps.len());
                        order.swap(i, j);
                    }
                    let subset = ps.prototypes.select_rows(&order[..take]);

                    match opts.mmd_mode {
                        MmdMode::Minibatch => {
                            let resolved = kspec.resolve(&feats, &subset)?;
                            loss_mmd = mmd2(&feats, &subset, &resolved)?;
                            let g = mmd2_grad_wrt_x(&feats, &subset, &resolved)?;
                            add_feat_grad(&mut grad_feats, &g, opts.lambda);
                        }
                        MmdMode::Full => {
                            let (all_feats, all_cache) = forward_cached(&student, data)?;
                            let resolved = kspec.resolve(&all_feats, &subset)?;
                            loss_mmd = mmd2(&all_feats, &subset, &resolved)?;
                            let mut g = mmd2_grad_wrt_x(&all_feats, &subset, &resolved)?;
                            for v in g.as_mut_slice() {
                                *v *= opts.lambda;
                            }
                            full_grads = Some(backward(&student, &all_cache, &g)?);
                        }
                    }
                }
            }

            let total = opts.beta1 * ce_hard
                + opts.beta2 * ce_soft
                + opts.gamma1 * tri_hard
                + opts.gamma2 * tri_soft
                + opts.lambda * loss_mmd;
            if !total.is_finite() {
                return Err(Error::NonFinite("local training loss"));
            }

            let mut grads = backward(&student, &cache, &grad_feats)?;
            if let Some(extra) = full_grads {
                for (g, e) in [
                    (&mut grads.w1, &extra.w1),
                    (&mut grads.b1, &extra.b1),
                    (&mut grads.w2, &extra.w2),
                    (&mut grads.b2, &extra.b2),
                ] {
                    for (gv, &ev) in g.iter_mut().zip(e) {
                        *gv += ev;
                    }
                }
            }
            student = sgd_step(&student, &grads, opts.lr)?;
            head = sgd_step_head(&head, &head_grad, opts.lr)?;
            teacher = ema_update(&teacher, &student, opts.tau)?;
            teacher_head = ema_update_head(&teacher_head, &head, opts.tau)?;

            acc.steps += 1;
            acc.loss_ce += opts.beta1 * ce_hard + opts.beta2 * ce_soft;
            acc.loss_tri += opts.gamma1 * tri_hard + opts.gamma2 * tri_soft;
            acc.loss_mmd += loss_mmd;
        }
    }

    let transmitted = match opts.transmit {
        Transmit::Teacher => teacher,
        Transmit::Student => student,
    };
    Ok((transmitted, acc))
}

fn softmax_rows(logits: &FeatureMatrix<f64>) -> FeatureMatrix<f64> {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// One client's local round: reset both models to the aggregated parameters,
/// re-cluster with the fresh student, rebuild the head, then run
/// `ppe_count * ceil(K_i / I)` optimizer steps. Clients whose clustering
/// yields nothing skip the round and hand the global model back unchanged.
pub fn client_round(
    cs: &mut ClientState,
    global: &ModelParams<f64>,
    protos: &PrototypeSet,
    opts: &LocalTrainOpts,
) -> Result<(ModelParams<f64>, ClientRoundStats)> {
    if opts.lambda > 0.0 && opts.kernel != KernelKind::None && protos.is_empty() {
        return Err(Error::EmptyInput("client_round needs prototypes when lambda > 0"));
    }
    let feats = forward(global, &cs.raw_data)?;
    let labels = dbscan(&feats, opts.dbscan_eps, opts.dbscan_min_pts)?;
    let ds = build_pseudo_dataset(&labels);
    // a single cluster admits no triplet negatives; treat like unclusterable
    if ds.k < 2 {
        return Ok((
            global.clone(),
            ClientRoundStats {
                client_id: cs.client_id,
                k_i: ds.k,
                steps: 0,
                loss_ce: 0.0,
                loss_tri: 0.0,
                loss_mmd: 0.0,
                skipped: true,
            },
        ));
    }
    let (params, acc) = train_loop(&cs.raw_data, &ds, global, Some(protos), opts, &mut cs.rng)?;
    let n = acc.steps.max(1) as f64;
    Ok((
        params,
        ClientRoundStats {
            client_id: cs.client_id,
            k_i: ds.k,
            steps: acc.steps,
            loss_ce: acc.loss_ce / n,
            loss_tri: acc.loss_tri / n,
            loss_mmd: acc.loss_mmd / n,
            skipped: false,
        },
    ))
}

/// The pseudo-client's supervised round: same loop, true labels, fixed class
/// count, no clustering and no alignment term.
pub fn pseudo_client_round(
    source: &SourceDomain,
    global: &ModelParams<f64>,
    opts: &LocalTrainOpts,
    rng: &mut ChaCha12Rng,
) -> Result<(ModelParams<f64>, f64)> {
    let ds = PseudoDataset {
        sample_indices: (0..source.data.rows()).collect(),
        pseudo_labels: source.labels.clone(),
        k: source.num_ids,
    };
    let (params, acc) = train_loop(&source.data, &ds, global, None, opts, rng)?;
    let n = acc.steps.max(1) as f64;
    Ok((params, (acc.loss_ce + acc.loss_tri) / n))
}

/// Weighted aggregation: theta = alpha * theta_s + (1 - alpha) * sum w_i theta_i
/// with w_i = N_i / sum N_j. Endpoints are exact.
pub fn aggregate(
    pseudo: &ModelParams<f64>,
    clients: &[(ModelParams<f64>, usize)],
    alpha: f64,
) -> Result<ModelParams<f64>> {
    if clients.is_empty() {
        return Err(Error::EmptyInput("aggregate needs at least one client"));
    }
    for (p, _) in clients {
        if !p.same_shape(pseudo) {
            return Err(Error::DimensionMismatch {
                context: "aggregate",
                expected: pseudo.param_count(),
                found: p.param_count(),
            });
        }
    }
    let total: usize = clients.iter().map(|&(_, n)| n).sum();
    if total == 0 {
        return Err(Error::InvalidArgument(
            "aggregate: all client weights are zero".into(),
        ));
    }
    if alpha == 1.0 {
        return Ok(pseudo.clone());
    }
    let mut mix = vec![0.0f64; pseudo.param_count()];
    for (p, n) in clients {
        let w = *n as f64 / total as f64;
        for (m, v) in mix.iter_mut().zip(p.to_flat()) {
            *m += w * v;
        }
    }
    let flat: Vec<f64> = if alpha == 0.0 {
        mix
    } else {
        pseudo
            .to_flat()
            .iter()
            .zip(&mix)
            .map(|(&s, &m)| alpha * s + (1.0 - alpha) * m)
            .collect()
    };
    ModelParams::from_flat(pseudo.d_in, pseudo.d_hidden, pseudo.d_feat, &flat)
}

fn derive_seed(master: u64, stream: u64) -> u64 {
    // splitmix64 over (master + stream)
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Supervised warm-up on the source before federation starts.
fn warmup(
    source: &SourceDomain,
    params: &ModelParams<f64>,
    steps: usize,
    opts: &LocalTrainOpts,
    rng: &mut ChaCha12Rng,
) -> Result<ModelParams<f64>> {
    let ds = PseudoDataset {
        sample_indices: (0..source.data.rows()).collect(),
        pseudo_labels: source.labels.clone(),
        k: source.num_ids,
    };
    let mut student = params.clone();
    let init_feats = forward(&student, &source.data)?;
    let mut head = centroid_head(&init_feats, &source.labels, source.num_ids);
    for _ in 0..steps {
        let batch = pk_sample(&ds, opts.identities_per_batch, opts.images_per_identity, rng)?;
        let indices: Vec<usize> = batch.iter().map(|&(i, _)| i).collect();
        let labels: Vec<usize> = batch.iter().map(|&(_, c)| c).collect();
        let input = source.data.select_rows(&indices);
        let (feats, cache) = forward_cached(&student, &input)?;
        let (_, dhead, dfeat_ce) = ce_loss_grad(&head, &feats, CeTarget::Hard(&labels))?;
        let (_, dfeat_tri) = triplet_loss_grad(&feats, &labels, opts.margin)?;
        let mut grad_feats = dfeat_ce;
        for (g, &t) in grad_feats.as_mut_slice().iter_mut().zip(dfeat_tri.as_slice()) {
            *g += t;
        }
        let grads = backward(&student, &cache, &grad_feats)?;
        student = sgd_step(&student, &grads, opts.lr)?;
        head = sgd_step_head(&head, &dhead, opts.lr)?;
    }
    Ok(student)
}

/// Everything `run_federation` leaves behind.
pub struct FederationOutcome {
    pub reports: Vec<RoundReport>,
    pub final_params: ModelParams<f64>,
    pub ledger: CommLedger,
}

/// Run the full protocol on pre-built data.
pub fn run_federation_with_data(
    cfg: &ExperimentConfig,
    data: &SynthOutput,
) -> Result<FederationOutcome> {
    cfg.validate()?;
    let opts = LocalTrainOpts::from_config(cfg);
    let d_in = data.source.data.cols();

    let mut init_rng = ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, 1));
    let mut global = ModelParams::<f64>::random(
        d_in,
        cfg.model.d_hidden,
        cfg.model.d_feat,
        0.2,
        &mut init_rng,
    );
    let mut warm_rng = ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, 2));
    if cfg.train.warmup_steps > 0 {
        global = warmup(&data.source, &global, cfg.train.warmup_steps, &opts, &mut warm_rng)?;
    }

    let mut server_rng = ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, 3));
    let mut pseudo_rng = ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, 4));
    let mut clients: Vec<ClientState> = data
        .clients
        .iter()
        .enumerate()
        .map(|(i, c)| ClientState {
            client_id: i,
            raw_data: c.data.clone(),
            rng: ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, 100 + i as u64)),
        })
        .collect();

    let param_count = global.param_count() as u64;
    let n_clients = clients.len() as u64;
    let upload_models_per_client: u64 = match cfg.train.comm_baseline {
        CommBaseline::Single => 1,
        CommBaseline::Mmt4 => 4,
    };

    let mut ledger = CommLedger::default();
    let mut reports = Vec::with_capacity(cfg.rounds);
    let mut prev_pseudo_model = global.clone();

    for round in 1..=cfg.rounds {
        // transmission stage
        let proto_model = match cfg.train.proto_source {
            ProtoSource::Global => &global,
            ProtoSource::PseudoClient => &prev_pseudo_model,
        };
        let protos_full = compute_prototypes(proto_model, &data.source)?;
        let protos = subsample_prototypes(&protos_full, cfg.train.proto_fraction, &mut server_rng)?;
        let prototype_bytes = (protos.len() * protos.prototypes.cols()) as u64 * BYTES_PER_ENTRY;
        let downloaded = n_clients * param_count * BYTES_PER_ENTRY + n_clients * prototype_bytes;

        // local training stage
        let (pseudo_model, pseudo_loss) =
            pseudo_client_round(&data.source, &global, &opts, &mut pseudo_rng)?;
        let client_results = run_clients(&mut clients, &global, &protos, &opts, cfg.workers)?;

        // aggregation stage
        let uploaded = n_clients * upload_models_per_client * param_count * BYTES_PER_ENTRY;
        let weighted: Vec<(ModelParams<f64>, usize)> = client_results
            .iter()
            .map(|(p, _)| p.clone())
            .zip(clients.iter().map(|c| c.raw_data.rows()))
            .collect();
        global = aggregate(&pseudo_model, &weighted, cfg.loss.alpha)?;
        prev_pseudo_model = pseudo_model;

        ledger.record_round(uploaded, downloaded, prototype_bytes);
        let (map, rank1) = evaluate(&global, &data.eval)?;
        reports.push(RoundReport {
            round,
            per_client: client_results.into_iter().map(|(_, s)| s).collect(),
            pseudo_client_loss: pseudo_loss,
            uploaded_bytes: uploaded,
            downloaded_bytes: downloaded,
            prototype_bytes,
            map,
            rank1,
        });
        log::info!("round {round}: mAP {map:.4}, rank1 {rank1:.4}");
    }
    Ok(FederationOutcome {
        reports,
        final_params: global,
        ledger,
    })
}

/// Client rounds are mutually independent; with `workers > 1` they run on a
/// thread pool, results collected back in client order.
fn run_clients(
    clients: &mut [ClientState],
    global: &ModelParams<f64>,
    protos: &PrototypeSet,
    opts: &LocalTrainOpts,
    workers: usize,
) -> Result<Vec<(ModelParams<f64>, ClientRoundStats)>> {
    if workers <= 1 || clients.len() <= 1 {
        return clients
            .iter_mut()
            .map(|c| client_round(c, global, protos, opts))
            .collect();
    }
    let chunk = clients.len().div_ceil(workers);
    let mut results: Vec<Option<Result<(ModelParams<f64>, ClientRoundStats)>>> =
        (0..clients.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (chunk_clients, chunk_results) in
            clients.chunks_mut(chunk).zip(results.chunks_mut(chunk))
        {
            scope.spawn(move || {
                for (c, slot) in chunk_clients.iter_mut().zip(chunk_results.iter_mut()) {
                    *slot = Some(client_round(c, global, protos, opts));
                }
            });
        }
    });
    results
        .into_iter()
        .map(|r| r.expect("client processed"))
        .collect()
}

/// Generate the synthetic scenario for `cfg` and run the protocol on it.
pub fn run_federation(cfg: &ExperimentConfig) -> Result<FederationOutcome> {
    let data = generate(&cfg.synth, derive_seed(cfg.seed, 0))?;
    run_federation_with_data(cfg, &data)
}
