//! Pseudo-labeling: DBSCAN over client features, pseudo-dataset construction,
//! PK mini-batch sampling, and pseudo-epoch scheduling.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mat::{sq_dist, FeatureMatrix};
use crate::scalar::Real;

/// Cluster assignment for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointLabel {
    Cluster(usize),
    Noise,
}

/// DBSCAN on Euclidean distance.
///
/// A point is core iff it has at least `min_pts` neighbors within `eps`
/// (inclusive, counting itself). Clusters are discovered by scanning points in
/// index order; border points attach to the first cluster whose expansion
/// reaches them, which is the lowest-id cluster with a core point within eps.
pub fn dbscan<S: Real>(
    features: &FeatureMatrix<S>,
    eps: S,
    min_pts: usize,
) -> Result<Vec<PointLabel>> {
    let n = features.rows();
    if n == 0 {
        return Err(Error::EmptyInput("dbscan"));
    }
    if eps <= S::zero() {
        return Err(Error::InvalidArgument("dbscan eps must be positive".into()));
    }
    if min_pts == 0 {
        return Err(Error::InvalidArgument("dbscan min_pts must be >= 1".into()));
    }
    let eps2 = eps * eps;
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if sq_dist(features.row(i), features.row(j)) <= eps2 {
                neighbors[i].push(j);
            }
        }
    }
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut labels = vec![PointLabel::Noise; n];
    let mut visited = vec![false; n];
    let mut next_cluster = 0usize;
    for seed in 0..n {
        if visited[seed] || !core[seed] {
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        // breadth-first expansion over core points
        let mut queue = vec![seed];
        visited[seed] = true;
        labels[seed] = PointLabel::Cluster(cluster);
        while let Some(p) = queue.pop() {
            for &q in &neighbors[p] {
                if labels[q] == PointLabel::Noise {
                    labels[q] = PointLabel::Cluster(cluster);
                }
                if core[q] && !visited[q] {
                    visited[q] = true;
                    queue.push(q);
                }
            }
        }
    }
    Ok(labels)
}

/// Non-noise samples with consecutively remapped cluster ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoDataset {
    /// indices into the client's raw dataset, in original order
    pub sample_indices: Vec<usize>,
    /// cluster ids in [0, k)
    pub pseudo_labels: Vec<usize>,
    pub k: usize,
}

impl PseudoDataset {
    pub fn len(&self) -> usize {
        self.sample_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_indices.is_empty()
    }

    /// Member positions (into `sample_indices`) per cluster id.
    pub fn members_by_cluster(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.k];
        for (pos, &label) in self.pseudo_labels.iter().enumerate() {
            members[label].push(pos);
        }
        members
    }
}

/// Drop noise points and remap surviving cluster ids to [0, k).
pub fn build_pseudo_dataset(labels: &[PointLabel]) -> PseudoDataset {
    let mut remap: Vec<Option<usize>> = Vec::new();
    let mut sample_indices = Vec::new();
    let mut pseudo_labels = Vec::new();
    let mut k = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        if let PointLabel::Cluster(c) = label {
            if c >= remap.len() {
                remap.resize(c + 1, None);
            }
            let mapped = *remap[c].get_or_insert_with(|| {
                let id = k;
                k += 1;
                id
            });
            sample_indices.push(i);
            pseudo_labels.push(mapped);
        }
    }
    PseudoDataset {
        sample_indices,
        pseudo_labels,
        k,
    }
}

/// PK sampling: min(I, K) distinct clusters without replacement; B members per
/// chosen cluster, with replacement only when the cluster is smaller than B.
/// Returns (raw dataset index, pseudo-label) pairs.
pub fn pk_sample<R: Rng>(
    ds: &PseudoDataset,
    identities_per_batch: usize,
    images_per_identity: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    if ds.k == 0 {
        return Err(Error::DegenerateBatch("client has no clusters to sample"));
    }
    let members = ds.members_by_cluster();
    let picks = identities_per_batch.min(ds.k);
    // Fisher-Yates prefix over cluster ids
    let mut ids: Vec<usize> = (0..ds.k).collect();
    for i in 0..picks {
        let j = rng.gen_range(i..ds.k);
        ids.swap(i, j);
    }
    let mut batch = Vec::with_capacity(picks * images_per_identity);
    for &cluster in &ids[..picks] {
        let pool = &members[cluster];
        if pool.len() < images_per_identity {
            for _ in 0..images_per_identity {
                let pos = pool[rng.gen_range(0..pool.len())];
                batch.push((ds.sample_indices[pos], cluster));
            }
        } else {
            let mut local: Vec<usize> = pool.clone();
            for i in 0..images_per_identity {
                let j = rng.gen_range(i..local.len());
                local.swap(i, j);
                batch.push((ds.sample_indices[local[i]], cluster));
            }
        }
    }
    Ok(batch)
}

/// Iterations for one personalized pseudo-epoch: ceil(k / identities_per_batch).
pub fn ppe_iterations(k: usize, identities_per_batch: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::DegenerateBatch("ppe_iterations with zero clusters"));
    }
    if identities_per_batch == 0 {
        return Err(Error::InvalidArgument(
            "identities_per_batch must be >= 1".into(),
        ));
    }
    Ok(k.div_ceil(identities_per_batch))
}
