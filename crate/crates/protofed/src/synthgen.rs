//! Deterministic synthetic data: a labeled source domain plus a multi-camera
//! target domain with controllable per-camera affine shift, partitioned
//! one-camera-per-client.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::evaluation::RetrievalSplit;
use crate::mat::FeatureMatrix;

/// Source cameras always use the identity view; two of them so every identity
/// has enough samples for triplet mining.
const SOURCE_CAMERAS: usize = 2;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(default = "d_ids")]
    pub num_source_ids: usize,
    #[serde(default = "d_ids")]
    pub num_target_ids: usize,
    #[serde(default = "d_cameras")]
    pub cameras: usize,
    #[serde(default = "d_spc")]
    pub samples_per_id_per_camera: usize,
    #[serde(default = "d_latent")]
    pub latent_dim: usize,
    #[serde(default = "d_shift")]
    pub shift_strength: f64,
    #[serde(default = "d_noise")]
    pub noise_std: f64,
}

fn d_ids() -> usize {
    30
}
fn d_cameras() -> usize {
    6
}
fn d_spc() -> usize {
    4
}
fn d_latent() -> usize {
    16
}
fn d_shift() -> f64 {
    1.0
}
fn d_noise() -> f64 {
    0.1
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.num_source_ids,
            self.num_target_ids,
            self.cameras,
            self.samples_per_id_per_camera,
            self.latent_dim,
        ];
        if counts.contains(&0) {
            return Err(Error::InvalidArgument(
                "synth spec counts must all be >= 1".into(),
            ));
        }
        if self.shift_strength < 0.0 || !self.shift_strength.is_finite() {
            return Err(Error::InvalidArgument(
                "shift_strength must be finite and >= 0".into(),
            ));
        }
        if self.noise_std <= 0.0 || !self.noise_std.is_finite() {
            return Err(Error::InvalidArgument(
                "noise_std must be finite and positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_source_ids: 30,
            num_target_ids: 30,
            cameras: 6,
            samples_per_id_per_camera: 4,
            latent_dim: 16,
            shift_strength: 1.0,
            noise_std: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceDomain {
    pub data: FeatureMatrix<f64>,
    pub labels: Vec<usize>,
    pub num_ids: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetClientData {
    pub camera_id: usize,
    pub data: FeatureMatrix<f64>,
    /// Ground-truth identities; kept for evaluation only, never exposed to
    /// the training loop.
    pub true_ids: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub source: SourceDomain,
    pub clients: Vec<TargetClientData>,
    pub eval: RetrievalSplit<f64>,
}

/// Fraction of `shift` that goes into the camera translation. The translation
/// is what lets an encoder tell cameras apart in input space.
const TRANSLATION_RATIO: f64 = 0.5;

/// Fraction of `shift` that goes into the rotation factor. A rotation of the
/// spherical latent cloud is invisible to any distribution-level criterion, so
/// it acts as an irreducible cross-camera difficulty floor; kept small.
const ROTATION_RATIO: f64 = 0.1;

/// Controls the log-scale spread of the anisotropic stretch factor. The
/// stretch reshapes the camera's feature cloud, which is exactly the component
/// a distribution-alignment loss can detect and undo.
const STRETCH_RATIO: f64 = 0.5;

/// One camera's affine view A x + b with A = Q S: a mild random rotation Q
/// composed with an anisotropic stretch S = U diag(exp(k g)) U^T. Deviation of
/// every factor from the identity scales with `shift`; shift 0 gives exactly
/// the identity view.
fn camera_map(d: usize, shift: f64, rng: &mut ChaCha12Rng) -> (Vec<f64>, Vec<f64>) {
    // rotation factor: orthonormalized perturbation of I
    let mut q = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let g: f64 = StandardNormal.sample(rng);
            q[i * d + j] = if i == j { 1.0 } else { 0.0 } + ROTATION_RATIO * shift * g;
        }
    }
    // stretch factor: random orthogonal eigenbasis, log-normal eigenvalues
    let mut u = vec![0.0; d * d];
    for v in u.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
    let eig: Vec<f64> = (0..d)
        .map(|_| {
            let g: f64 = StandardNormal.sample(rng);
            (STRETCH_RATIO * shift * g).exp()
        })
        .collect();
    let b: Vec<f64> = (0..d)
        .map(|_| {
            let g: f64 = StandardNormal.sample(rng);
            TRANSLATION_RATIO * shift * g
        })
        .collect();
    if shift == 0.0 {
        return (q, b);
    }
    gram_schmidt_rows(&mut q, d);
    gram_schmidt_rows(&mut u, d);
    // S = U diag(eig) U^T
    let mut s = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += u[k * d + i] * eig[k] * u[k * d + j];
            }
            s[i * d + j] = acc;
        }
    }
    // A = Q S
    let mut a = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += q[i * d + k] * s[k * d + j];
            }
            a[i * d + j] = acc;
        }
    }
    (a, b)
}

/// In-place modified Gram-Schmidt over the rows of a d x d matrix. Rows of a
/// random Gaussian perturbation of I are independent with probability 1, so a
/// vanishing norm is not expected; guard with a tiny floor anyway.
fn gram_schmidt_rows(a: &mut [f64], d: usize) {
    for i in 0..d {
        for j in 0..i {
            let (head, tail) = a.split_at_mut(i * d);
            let prev = &head[j * d..(j + 1) * d];
            let row = &mut tail[..d];
            let proj: f64 = row.iter().zip(prev).map(|(&x, &y)| x * y).sum();
            for (r, &p) in row.iter_mut().zip(prev) {
                *r -= proj * p;
            }
        }
        let row = &mut a[i * d..(i + 1) * d];
        let norm: f64 = row.iter().map(|&x| x * x).sum::<f64>().sqrt().max(1e-12);
        for r in row.iter_mut() {
            *r /= norm;
        }
    }
}

fn apply_camera(a: &[f64], b: &[f64], z: &[f64], noise_std: f64, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let d = z.len();
    let mut out = vec![0.0; d];
    for i in 0..d {
        let mut acc = b[i];
        for j in 0..d {
            acc += a[i * d + j] * z[j];
        }
        let eps: f64 = StandardNormal.sample(rng);
        out[i] = acc + noise_std * eps;
    }
    out
}

/// Generate the full synthetic scenario, deterministic given `seed`.
///
/// Source identities occupy ids [0, K); target identities [K, K + T), so the
/// two id spaces are disjoint. The evaluation split holds one query and one
/// gallery sample per target identity per camera, disjoint from the training
/// samples.
pub fn generate(spec: &SynthSpec, seed: u64) -> Result<SynthOutput> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let d = spec.latent_dim;

    let latent = |rng: &mut ChaCha12Rng| -> Vec<f64> {
        (0..d).map(|_| StandardNormal.sample(rng)).collect()
    };
    let source_latents: Vec<Vec<f64>> = (0..spec.num_source_ids).map(|_| latent(&mut rng)).collect();
    let target_latents: Vec<Vec<f64>> = (0..spec.num_target_ids).map(|_| latent(&mut rng)).collect();

    // source: identity view, no shift
    let identity_a: Vec<f64> = {
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            a[i * d + i] = 1.0;
        }
        a
    };
    let zero_b = vec![0.0; d];
    let mut src_rows = Vec::new();
    let mut src_labels = Vec::new();
    for (k, z) in source_latents.iter().enumerate() {
        for _cam in 0..SOURCE_CAMERAS {
            for _ in 0..spec.samples_per_id_per_camera {
                src_rows.push(apply_camera(&identity_a, &zero_b, z, spec.noise_std, &mut rng));
                src_labels.push(k);
            }
        }
    }
    let source = SourceDomain {
        data: FeatureMatrix::from_rows(&src_rows)?,
        labels: src_labels,
        num_ids: spec.num_source_ids,
    };

    // target: one distinct random affine view per camera
    let maps: Vec<(Vec<f64>, Vec<f64>)> = (0..spec.cameras)
        .map(|_| camera_map(d, spec.shift_strength, &mut rng))
        .collect();

    let mut clients = Vec::with_capacity(spec.cameras);
    let mut q_rows = Vec::new();
    let mut q_ids = Vec::new();
    let mut q_cams = Vec::new();
    let mut g_rows = Vec::new();
    let mut g_ids = Vec::new();
    let mut g_cams = Vec::new();
    for (cam, (a, b)) in maps.iter().enumerate() {
        let mut rows = Vec::new();
        let mut ids = Vec::new();
        for (t, z) in target_latents.iter().enumerate() {
            let gid = spec.num_source_ids + t;
            for _ in 0..spec.samples_per_id_per_camera {
                rows.push(apply_camera(a, b, z, spec.noise_std, &mut rng));
                ids.push(gid);
            }
            // held-out evaluation samples, disjoint from training
            q_rows.push(apply_camera(a, b, z, spec.noise_std, &mut rng));
            q_ids.push(gid);
            q_cams.push(cam);
            g_rows.push(apply_camera(a, b, z, spec.noise_std, &mut rng));
            g_ids.push(gid);
            g_cams.push(cam);
        }
        clients.push(TargetClientData {
            camera_id: cam,
            data: FeatureMatrix::from_rows(&rows)?,
            true_ids: ids,
        });
    }
    if spec.cameras < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 target cameras for cross-camera evaluation".into(),
        ));
    }
    let eval = RetrievalSplit::new(
        FeatureMatrix::from_rows(&q_rows)?,
        q_ids,
        q_cams,
        FeatureMatrix::from_rows(&g_rows)?,
        g_ids,
        g_cams,
    )?;
    Ok(SynthOutput {
        source,
        clients,
        eval,
    })
}

// ---------------------------------------------------------------------------
// flat binary dump/load
// ---------------------------------------------------------------------------

fn write_u32(w: &mut impl Write, v: usize) -> Result<()> {
    w.write_all(&(v as u32).to_le_bytes())?;
    Ok(())
}

fn write_f64s(w: &mut impl Write, vals: &[f64]) -> Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_i32s(w: &mut impl Write, vals: &[usize]) -> Result<()> {
    for &v in vals {
        w.write_all(&(v as i32).to_le_bytes())?;
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<usize> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf) as usize)
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

fn read_i32s(r: &mut impl Read, n: usize) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; 4];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        out.push(i32::from_le_bytes(buf) as usize);
    }
    Ok(out)
}

/// Layout: u32 header (latent_dim, source rows, client count, query rows,
/// gallery rows), then the source block (f64 data + i32 labels), per-client
/// blocks (u32 rows, u32 camera id, f64 data, i32 ids), and the two
/// evaluation blocks (f64 data, i32 ids, i32 cameras).
pub fn dump(out: &SynthOutput, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    let d = out.source.data.cols();
    write_u32(&mut w, d)?;
    write_u32(&mut w, out.source.data.rows())?;
    write_u32(&mut w, out.clients.len())?;
    write_u32(&mut w, out.eval.query.rows())?;
    write_u32(&mut w, out.eval.gallery.rows())?;
    write_u32(&mut w, out.source.num_ids)?;
    write_f64s(&mut w, out.source.data.as_slice())?;
    write_i32s(&mut w, &out.source.labels)?;
    for c in &out.clients {
        write_u32(&mut w, c.data.rows())?;
        write_u32(&mut w, c.camera_id)?;
        write_f64s(&mut w, c.data.as_slice())?;
        write_i32s(&mut w, &c.true_ids)?;
    }
    write_f64s(&mut w, out.eval.query.as_slice())?;
    write_i32s(&mut w, &out.eval.query_ids)?;
    write_i32s(&mut w, &out.eval.query_cams)?;
    write_f64s(&mut w, out.eval.gallery.as_slice())?;
    write_i32s(&mut w, &out.eval.gallery_ids)?;
    write_i32s(&mut w, &out.eval.gallery_cams)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<SynthOutput> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let d = read_u32(&mut r)?;
    let ns = read_u32(&mut r)?;
    let nc = read_u32(&mut r)?;
    let nq = read_u32(&mut r)?;
    let ng = read_u32(&mut r)?;
    let num_ids = read_u32(&mut r)?;
    let source = SourceDomain {
        data: FeatureMatrix::new(read_f64s(&mut r, ns * d)?, ns, d)?,
        labels: read_i32s(&mut r, ns)?,
        num_ids,
    };
    let mut clients = Vec::with_capacity(nc);
    for _ in 0..nc {
        let rows = read_u32(&mut r)?;
        let camera_id = read_u32(&mut r)?;
        clients.push(TargetClientData {
            camera_id,
            data: FeatureMatrix::new(read_f64s(&mut r, rows * d)?, rows, d)?,
            true_ids: read_i32s(&mut r, rows)?,
        });
    }
    let query = FeatureMatrix::new(read_f64s(&mut r, nq * d)?, nq, d)?;
    let query_ids = read_i32s(&mut r, nq)?;
    let query_cams = read_i32s(&mut r, nq)?;
    let gallery = FeatureMatrix::new(read_f64s(&mut r, ng * d)?, ng, d)?;
    let gallery_ids = read_i32s(&mut r, ng)?;
    let gallery_cams = read_i32s(&mut r, ng)?;
    let eval = RetrievalSplit::new(query, query_ids, query_cams, gallery, gallery_ids, gallery_cams)?;
    Ok(SynthOutput {
        source,
        clients,
        eval,
    })
}
