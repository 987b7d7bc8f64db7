//! The feature extractor: a two-layer perceptron with L2-normalized output,
//! per-client linear classifier heads, the training losses with analytic
//! gradients, plain SGD, and the EMA teacher update.

use crate::error::{Error, Result};
use crate::mat::{dot, sq_dist, FeatureMatrix};
use crate::scalar::Real;

/// Encoder parameters. Flattens to exactly `param_count()` scalars in the
/// order w1 (row-major), b1, w2 (row-major), b2.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S> {
    pub d_in: usize,
    pub d_hidden: usize,
    pub d_feat: usize,
    pub w1: Vec<S>,
    pub b1: Vec<S>,
    pub w2: Vec<S>,
    pub b2: Vec<S>,
}

impl<S: Real> ModelParams<S> {
    pub fn zeros(d_in: usize, d_hidden: usize, d_feat: usize) -> Self {
        Self {
            d_in,
            d_hidden,
            d_feat,
            w1: vec![S::zero(); d_in * d_hidden],
            b1: vec![S::zero(); d_hidden],
            w2: vec![S::zero(); d_hidden * d_feat],
            b2: vec![S::zero(); d_feat],
        }
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.d_in == other.d_in && self.d_hidden == other.d_hidden && self.d_feat == other.d_feat
    }

    pub fn to_flat(&self) -> Vec<S> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.extend_from_slice(&self.b2);
        v
    }

    pub fn from_flat(d_in: usize, d_hidden: usize, d_feat: usize, flat: &[S]) -> Result<Self> {
        let mut p = Self::zeros(d_in, d_hidden, d_feat);
        if flat.len() != p.param_count() {
            return Err(Error::DimensionMismatch {
                context: "ModelParams::from_flat",
                expected: p.param_count(),
                found: flat.len(),
            });
        }
        let mut off = 0;
        for field in [&mut p.w1, &mut p.b1, &mut p.w2, &mut p.b2] {
            let len = field.len();
            field.copy_from_slice(&flat[off..off + len]);
            off += len;
        }
        Ok(p)
    }

    /// Small Gaussian initialization, deterministic given the rng.
    pub fn random<R: rand::Rng>(
        d_in: usize,
        d_hidden: usize,
        d_feat: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        use rand_distr::{Distribution, StandardNormal};
        let mut p = Self::zeros(d_in, d_hidden, d_feat);
        for field in [&mut p.w1, &mut p.b1, &mut p.w2, &mut p.b2] {
            for v in field.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *v = S::of(z * scale);
            }
        }
        p
    }
}

/// Per-client linear classifier head on normalized features (no bias).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead<S> {
    pub d_feat: usize,
    pub num_classes: usize,
    /// d_feat x num_classes, row-major.
    pub w: Vec<S>,
}

impl<S: Real> ClassifierHead<S> {
    pub fn zeros(d_feat: usize, num_classes: usize) -> Self {
        Self {
            d_feat,
            num_classes,
            w: vec![S::zero(); d_feat * num_classes],
        }
    }

    /// logits[i][c] = features[i] . w[:, c]
    pub fn logits(&self, features: &FeatureMatrix<S>) -> Result<FeatureMatrix<S>> {
        if features.cols() != self.d_feat {
            return Err(Error::DimensionMismatch {
                context: "ClassifierHead::logits",
                expected: self.d_feat,
                found: features.cols(),
            });
        }
        let mut out = FeatureMatrix::zeros(features.rows(), self.num_classes);
        for i in 0..features.rows() {
            let f = features.row(i);
            let o = out.row_mut(i);
            for (j, &fv) in f.iter().enumerate() {
                let wrow = &self.w[j * self.num_classes..(j + 1) * self.num_classes];
                for (c, &wv) in wrow.iter().enumerate() {
                    o[c] += fv * wv;
                }
            }
        }
        Ok(out)
    }
}

/// Intermediate activations kept for backpropagation.
pub struct ForwardCache<S> {
    input: FeatureMatrix<S>,
    /// hidden pre-activation, rows x d_hidden
    h: FeatureMatrix<S>,
    /// relu(h)
    a: FeatureMatrix<S>,
    /// pre-normalization features, rows x d_feat
    z: FeatureMatrix<S>,
    /// per-row Euclidean norms of z
    norms: Vec<S>,
}

/// L2-normalized features: rows of relu(x w1 + b1) w2 + b2, each scaled to
/// unit norm (all-zero rows stay zero).
pub fn forward<S: Real>(params: &ModelParams<S>, batch: &FeatureMatrix<S>) -> Result<FeatureMatrix<S>> {
    forward_cached(params, batch).map(|(f, _)| f)
}

pub fn forward_cached<S: Real>(
    params: &ModelParams<S>,
    batch: &FeatureMatrix<S>,
) -> Result<(FeatureMatrix<S>, ForwardCache<S>)> {
    if batch.cols() != params.d_in {
        return Err(Error::DimensionMismatch {
            context: "forward",
            expected: params.d_in,
            found: batch.cols(),
        });
    }
    let n = batch.rows();
    let (dh, df) = (params.d_hidden, params.d_feat);
    let mut h = FeatureMatrix::zeros(n, dh);
    for i in 0..n {
        let x = batch.row(i);
        let o = h.row_mut(i);
        o.copy_from_slice(&params.b1);
        for (j, &xv) in x.iter().enumerate() {
            let wrow = &params.w1[j * dh..(j + 1) * dh];
            for (c, &wv) in wrow.iter().enumerate() {
                o[c] += xv * wv;
            }
        }
    }
    let mut a = h.clone();
    for v in a.as_mut_slice() {
        if *v < S::zero() {
            *v = S::zero();
        }
    }
    let mut z = FeatureMatrix::zeros(n, df);
    for i in 0..n {
        let ar = a.row(i);
        let o = z.row_mut(i);
        o.copy_from_slice(&params.b2);
        for (j, &av) in ar.iter().enumerate() {
            let wrow = &params.w2[j * df..(j + 1) * df];
            for (c, &wv) in wrow.iter().enumerate() {
                o[c] += av * wv;
            }
        }
    }
    let mut feats = z.clone();
    let mut norms = Vec::with_capacity(n);
    for i in 0..n {
        let norm = dot(z.row(i), z.row(i)).sqrt();
        norms.push(norm);
        if norm > S::zero() {
            for v in feats.row_mut(i) {
                *v /= norm;
            }
        }
    }
    let cache = ForwardCache {
        input: batch.clone(),
        h,
        a,
        z,
        norms,
    };
    Ok((feats, cache))
}

/// Backpropagate a gradient with respect to the normalized features into a
/// gradient with respect to the encoder parameters.
pub fn backward<S: Real>(
    params: &ModelParams<S>,
    cache: &ForwardCache<S>,
    grad_features: &FeatureMatrix<S>,
) -> Result<ModelParams<S>> {
    let n = cache.input.rows();
    if grad_features.rows() != n || grad_features.cols() != params.d_feat {
        return Err(Error::DimensionMismatch {
            context: "backward",
            expected: n * params.d_feat,
            found: grad_features.rows() * grad_features.cols(),
        });
    }
    let (dh, df) = (params.d_hidden, params.d_feat);
    let mut grads = ModelParams::zeros(params.d_in, dh, df);

    // through the row normalization: dz = (g - (g.f) f) / |z|
    let mut dz = FeatureMatrix::zeros(n, df);
    for i in 0..n {
        let norm = cache.norms[i];
        if norm <= S::zero() {
            continue; // zero row stays zero; subgradient 0
        }
        let zrow = cache.z.row(i);
        let g = grad_features.row(i);
        let gf = dot(g, zrow) / norm; // g . f  with f = z/|z|
        let o = dz.row_mut(i);
        for c in 0..df {
            o[c] = (g[c] - gf * zrow[c] / norm) / norm;
        }
    }

    // second linear layer
    let mut da = FeatureMatrix::zeros(n, dh);
    for i in 0..n {
        let ar = cache.a.row(i);
        let dzr = dz.row(i);
        for c in 0..df {
            grads.b2[c] += dzr[c];
        }
        for j in 0..dh {
            let wrow = &params.w2[j * df..(j + 1) * df];
            let gw = &mut grads.w2[j * df..(j + 1) * df];
            let mut acc = S::zero();
            for c in 0..df {
                gw[c] += ar[j] * dzr[c];
                acc += wrow[c] * dzr[c];
            }
            da.set(i, j, acc);
        }
    }

    // relu and first linear layer
    for i in 0..n {
        let x = cache.input.row(i);
        for j in 0..dh {
            let dh_ij = if cache.h.get(i, j) > S::zero() {
                da.get(i, j)
            } else {
                S::zero()
            };
            if dh_ij == S::zero() {
                continue;
            }
            grads.b1[j] += dh_ij;
            for (c, &xv) in x.iter().enumerate() {
                grads.w1[c * dh + j] += xv * dh_ij;
            }
        }
    }
    Ok(grads)
}

/// Classification target: hard labels or a soft distribution per row.
pub enum CeTarget<'a, S> {
    Hard(&'a [usize]),
    Soft(&'a FeatureMatrix<S>),
}

fn softmax_rows<S: Real>(logits: &FeatureMatrix<S>) -> FeatureMatrix<S> {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        let mut sum = S::zero();
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

/// Mean cross-entropy of `head`'s logits on `features` against hard labels or
/// a soft target distribution. Returns (loss, grad wrt head weights, grad wrt
/// features).
pub fn ce_loss_grad<S: Real>(
    head: &ClassifierHead<S>,
    features: &FeatureMatrix<S>,
    target: CeTarget<'_, S>,
) -> Result<(S, ClassifierHead<S>, FeatureMatrix<S>)> {
    let n = features.rows();
    if n == 0 {
        return Err(Error::EmptyInput("ce_loss_grad"));
    }
    let logits = head.logits(features)?;
    let probs = softmax_rows(&logits);
    let nf = S::of(n as f64);
    let tiny = S::of(1e-300);

    let mut loss = S::zero();
    // dL/dlogits = (softmax - target) / n
    let mut dlogits = probs.clone();
    match target {
        CeTarget::Hard(labels) => {
            if labels.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "ce_loss_grad labels",
                    expected: n,
                    found: labels.len(),
                });
            }
            for (i, &y) in labels.iter().enumerate() {
                if y >= head.num_classes {
                    return Err(Error::InvalidArgument(format!(
                        "label {y} out of range for {} classes",
                        head.num_classes
                    )));
                }
                loss -= probs.get(i, y).max(tiny).ln();
                let v = dlogits.get(i, y) - S::one();
                dlogits.set(i, y, v);
            }
        }
        CeTarget::Soft(targets) => {
            if targets.rows() != n || targets.cols() != head.num_classes {
                return Err(Error::DimensionMismatch {
                    context: "ce_loss_grad soft targets",
                    expected: n * head.num_classes,
                    found: targets.rows() * targets.cols(),
                });
            }
            for i in 0..n {
                for c in 0..head.num_classes {
                    let t = targets.get(i, c);
                    loss -= t * probs.get(i, c).max(tiny).ln();
                    let v = dlogits.get(i, c) - t;
                    dlogits.set(i, c, v);
                }
            }
        }
    }
    loss /= nf;
    for v in dlogits.as_mut_slice() {
        *v /= nf;
    }

    // head grad: dW[j][c] = sum_i features[i][j] * dlogits[i][c]
    let mut dhead = ClassifierHead::zeros(head.d_feat, head.num_classes);
    let mut dfeats = FeatureMatrix::zeros(n, head.d_feat);
    for i in 0..n {
        let f = features.row(i);
        let dl = dlogits.row(i);
        let dfr = dfeats.row_mut(i);
        for j in 0..head.d_feat {
            let wrow = &head.w[j * head.num_classes..(j + 1) * head.num_classes];
            let gw = &mut dhead.w[j * head.num_classes..(j + 1) * head.num_classes];
            let mut acc = S::zero();
            for c in 0..head.num_classes {
                gw[c] += f[j] * dl[c];
                acc += wrow[c] * dl[c];
            }
            dfr[j] = acc;
        }
    }
    Ok((loss, dhead, dfeats))
}

/// Hardest positive / hardest negative per anchor, by Euclidean distance.
/// Anchors lacking either are skipped; returns an error when none is valid.
fn hard_pairs<S: Real>(
    features: &FeatureMatrix<S>,
    labels: &[usize],
) -> Result<Vec<(usize, usize, usize)>> {
    let n = features.rows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            context: "triplet labels",
            expected: n,
            found: labels.len(),
        });
    }
    let mut pairs = Vec::new();
    for a in 0..n {
        let mut best_p: Option<(usize, S)> = None;
        let mut best_n: Option<(usize, S)> = None;
        for j in 0..n {
            if j == a {
                continue;
            }
            let d = sq_dist(features.row(a), features.row(j)).sqrt();
            if labels[j] == labels[a] {
                if best_p.is_none_or(|(_, bd)| d > bd) {
                    best_p = Some((j, d));
                }
            } else if best_n.is_none_or(|(_, bd)| d < bd) {
                best_n = Some((j, d));
            }
        }
        if let (Some((p, _)), Some((ng, _))) = (best_p, best_n) {
            pairs.push((a, p, ng));
        }
    }
    if pairs.is_empty() {
        return Err(Error::DegenerateBatch(
            "no anchor with both a positive and a negative",
        ));
    }
    Ok(pairs)
}

/// Accumulate w * d|f_a - f_b| / df into the gradient rows of a and b.
/// Subgradient 0 when the two rows coincide.
fn accum_dist_grad<S: Real>(
    features: &FeatureMatrix<S>,
    grad: &mut FeatureMatrix<S>,
    a: usize,
    b: usize,
    w: S,
) {
    let d = sq_dist(features.row(a), features.row(b)).sqrt();
    if d <= S::zero() {
        return;
    }
    let cols = features.cols();
    for c in 0..cols {
        let diff = (features.get(a, c) - features.get(b, c)) / d;
        let ga = grad.get(a, c) + w * diff;
        grad.set(a, c, ga);
        let gb = grad.get(b, c) - w * diff;
        grad.set(b, c, gb);
    }
}

/// Batch-hard triplet loss: mean over valid anchors of
/// max(0, margin + d(a, hardest positive) - d(a, hardest negative)).
pub fn triplet_loss_grad<S: Real>(
    features: &FeatureMatrix<S>,
    labels: &[usize],
    margin: S,
) -> Result<(S, FeatureMatrix<S>)> {
    let pairs = hard_pairs(features, labels)?;
    let nv = S::of(pairs.len() as f64);
    let mut loss = S::zero();
    let mut grad = FeatureMatrix::zeros(features.rows(), features.cols());
    for &(a, p, ng) in &pairs {
        let d_ap = sq_dist(features.row(a), features.row(p)).sqrt();
        let d_an = sq_dist(features.row(a), features.row(ng)).sqrt();
        let hinge = margin + d_ap - d_an;
        if hinge > S::zero() {
            loss += hinge;
            accum_dist_grad(features, &mut grad, a, p, S::one() / nv);
            accum_dist_grad(features, &mut grad, a, ng, -S::one() / nv);
        }
    }
    loss /= nv;
    Ok((loss, grad))
}

fn sigmoid<S: Real>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// Teacher-consistency triplet: binary cross-entropy of the student's
/// softmax-triplet probability against the teacher's, with the hardest
/// positive/negative indices fixed by student distances. Gradients flow only
/// through the student features.
pub fn soft_triplet_loss_grad<S: Real>(
    student: &FeatureMatrix<S>,
    teacher: &FeatureMatrix<S>,
    labels: &[usize],
) -> Result<(S, FeatureMatrix<S>)> {
    if teacher.rows() != student.rows() || teacher.cols() != student.cols() {
        return Err(Error::DimensionMismatch {
            context: "soft_triplet_loss_grad",
            expected: student.rows() * student.cols(),
            found: teacher.rows() * teacher.cols(),
        });
    }
    let pairs = hard_pairs(student, labels)?;
    let nv = S::of(pairs.len() as f64);
    let tiny = S::of(1e-12);
    let mut loss = S::zero();
    let mut grad = FeatureMatrix::zeros(student.rows(), student.cols());
    for &(a, p, ng) in &pairs {
        let d_ap = sq_dist(student.row(a), student.row(p)).sqrt();
        let d_an = sq_dist(student.row(a), student.row(ng)).sqrt();
        let p_s = sigmoid(d_an - d_ap);
        let td_ap = sq_dist(teacher.row(a), teacher.row(p)).sqrt();
        let td_an = sq_dist(teacher.row(a), teacher.row(ng)).sqrt();
        let p_t = sigmoid(td_an - td_ap);
        loss -= p_t * p_s.max(tiny).ln() + (S::one() - p_t) * (S::one() - p_s).max(tiny).ln();
        // d BCE / d s = p_s - p_t with s = d_an - d_ap
        let ds = (p_s - p_t) / nv;
        accum_dist_grad(student, &mut grad, a, ng, ds);
        accum_dist_grad(student, &mut grad, a, p, -ds);
    }
    loss /= nv;
    Ok((loss, grad))
}

fn step_flat<S: Real>(p: &mut [S], g: &[S], lr: S) {
    for (pv, &gv) in p.iter_mut().zip(g) {
        *pv -= lr * gv;
    }
}

/// One SGD step: theta <- theta - lr * g.
pub fn sgd_step<S: Real>(params: &ModelParams<S>, grads: &ModelParams<S>, lr: S) -> Result<ModelParams<S>> {
    if !params.same_shape(grads) {
        return Err(Error::DimensionMismatch {
            context: "sgd_step",
            expected: params.param_count(),
            found: grads.param_count(),
        });
    }
    let mut out = params.clone();
    step_flat(&mut out.w1, &grads.w1, lr);
    step_flat(&mut out.b1, &grads.b1, lr);
    step_flat(&mut out.w2, &grads.w2, lr);
    step_flat(&mut out.b2, &grads.b2, lr);
    Ok(out)
}

pub fn sgd_step_head<S: Real>(
    head: &ClassifierHead<S>,
    grads: &ClassifierHead<S>,
    lr: S,
) -> Result<ClassifierHead<S>> {
    if head.d_feat != grads.d_feat || head.num_classes != grads.num_classes {
        return Err(Error::DimensionMismatch {
            context: "sgd_step_head",
            expected: head.w.len(),
            found: grads.w.len(),
        });
    }
    let mut out = head.clone();
    step_flat(&mut out.w, &grads.w, lr);
    Ok(out)
}

fn ema_flat<S: Real>(t: &mut [S], s: &[S], tau: S) {
    for (tv, &sv) in t.iter_mut().zip(s) {
        *tv = tau * *tv + (S::one() - tau) * sv;
    }
}

/// EMA teacher update: teacher <- tau * teacher + (1 - tau) * student.
pub fn ema_update<S: Real>(
    teacher: &ModelParams<S>,
    student: &ModelParams<S>,
    tau: S,
) -> Result<ModelParams<S>> {
    if !teacher.same_shape(student) {
        return Err(Error::DimensionMismatch {
            context: "ema_update",
            expected: teacher.param_count(),
            found: student.param_count(),
        });
    }
    if tau < S::zero() || tau >= S::one() {
        return Err(Error::InvalidArgument("tau must be in [0, 1)".into()));
    }
    let mut out = teacher.clone();
    ema_flat(&mut out.w1, &student.w1, tau);
    ema_flat(&mut out.b1, &student.b1, tau);
    ema_flat(&mut out.w2, &student.w2, tau);
    ema_flat(&mut out.b2, &student.b2, tau);
    Ok(out)
}

pub fn ema_update_head<S: Real>(
    teacher: &ClassifierHead<S>,
    student: &ClassifierHead<S>,
    tau: S,
) -> Result<ClassifierHead<S>> {
    if teacher.d_feat != student.d_feat || teacher.num_classes != student.num_classes {
        return Err(Error::DimensionMismatch {
            context: "ema_update_head",
            expected: teacher.w.len(),
            found: student.w.len(),
        });
    }
    let mut out = teacher.clone();
    ema_flat(&mut out.w, &student.w, tau);
    Ok(out)
}

// ---------------------------------------------------------------------------
// binary serialization
// ---------------------------------------------------------------------------

/// Wire format: four little-endian u32 (d_in, d_hidden, d_feat, num_classes;
/// num_classes = 0 when no head), then every parameter as a little-endian f64
/// in the order w1, b1, w2, b2, head weights.
pub fn serialize_params<S: Real>(params: &ModelParams<S>, head: Option<&ClassifierHead<S>>) -> Vec<u8> {
    let num_classes = head.map_or(0, |h| h.num_classes);
    let mut out = Vec::new();
    for dim in [params.d_in, params.d_hidden, params.d_feat, num_classes] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    let mut push = |vals: &[S]| {
        for v in vals {
            out.extend_from_slice(&v.to_f64().expect("finite").to_le_bytes());
        }
    };
    push(&params.w1);
    push(&params.b1);
    push(&params.w2);
    push(&params.b2);
    if let Some(h) = head {
        push(&h.w);
    }
    out
}

pub fn deserialize_params<S: Real>(bytes: &[u8]) -> Result<(ModelParams<S>, Option<ClassifierHead<S>>)> {
    let bad = || Error::InvalidArgument("truncated or malformed parameter blob".into());
    if bytes.len() < 16 {
        return Err(bad());
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[i * 4..i * 4 + 4].try_into().unwrap()) as usize;
    let (d_in, d_hidden, d_feat, num_classes) = (dim(0), dim(1), dim(2), dim(3));
    let mut params = ModelParams::<S>::zeros(d_in, d_hidden, d_feat);
    let n_floats = params.param_count() + d_feat * num_classes;
    if bytes.len() != 16 + 8 * n_floats {
        return Err(bad());
    }
    let mut off = 16;
    let mut take = |vals: &mut [S]| {
        for v in vals {
            *v = S::of(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
            off += 8;
        }
    };
    take(&mut params.w1);
    take(&mut params.b1);
    take(&mut params.w2);
    take(&mut params.b2);
    let head = if num_classes > 0 {
        let mut h = ClassifierHead::zeros(d_feat, num_classes);
        take(&mut h.w);
        Some(h)
    } else {
        None
    };
    Ok((params, head))
}
