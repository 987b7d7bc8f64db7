//! Cross-camera retrieval metrics: mean average precision and CMC Rank-1.

use crate::encoder::{forward, ModelParams};
use crate::error::{Error, Result};
use crate::mat::{sq_dist, FeatureMatrix};
use crate::scalar::Real;

/// Query and gallery samples with identity and camera annotations.
#[derive(Debug, Clone)]
pub struct RetrievalSplit<S> {
    pub query: FeatureMatrix<S>,
    pub query_ids: Vec<usize>,
    pub query_cams: Vec<usize>,
    pub gallery: FeatureMatrix<S>,
    pub gallery_ids: Vec<usize>,
    pub gallery_cams: Vec<usize>,
}

impl<S: Real> RetrievalSplit<S> {
    /// Validates shapes and the cross-camera matchability of every query.
    pub fn new(
        query: FeatureMatrix<S>,
        query_ids: Vec<usize>,
        query_cams: Vec<usize>,
        gallery: FeatureMatrix<S>,
        gallery_ids: Vec<usize>,
        gallery_cams: Vec<usize>,
    ) -> Result<Self> {
        if query_ids.len() != query.rows() || query_cams.len() != query.rows() {
            return Err(Error::DimensionMismatch {
                context: "RetrievalSplit query annotations",
                expected: query.rows(),
                found: query_ids.len().min(query_cams.len()),
            });
        }
        if gallery_ids.len() != gallery.rows() || gallery_cams.len() != gallery.rows() {
            return Err(Error::DimensionMismatch {
                context: "RetrievalSplit gallery annotations",
                expected: gallery.rows(),
                found: gallery_ids.len().min(gallery_cams.len()),
            });
        }
        for qi in 0..query.rows() {
            let has_match = gallery_ids
                .iter()
                .zip(&gallery_cams)
                .any(|(&id, &cam)| id == query_ids[qi] && cam != query_cams[qi]);
            if !has_match {
                return Err(Error::InvalidArgument(format!(
                    "query {qi} (id {}, cam {}) has no cross-camera gallery match",
                    query_ids[qi], query_cams[qi]
                )));
            }
        }
        Ok(Self {
            query,
            query_ids,
            query_cams,
            gallery,
            gallery_ids,
            gallery_cams,
        })
    }
}

/// mAP and Rank-1 on raw feature rows (no encoder applied).
///
/// Gallery entries with the query's id AND camera are excluded from the
/// ranking. Ties are broken by gallery index order.
pub fn evaluate_features<S: Real>(split: &RetrievalSplit<S>, features_q: &FeatureMatrix<S>, features_g: &FeatureMatrix<S>) -> Result<(f64, f64)> {
    let nq = features_q.rows();
    let ng = features_g.rows();
    let mut ap_sum = 0.0;
    let mut rank1_hits = 0usize;
    for qi in 0..nq {
        let qid = split.query_ids[qi];
        let qcam = split.query_cams[qi];
        // valid gallery entries with distances, stable in index order
        let mut order: Vec<(S, usize)> = Vec::with_capacity(ng);
        for gi in 0..ng {
            if split.gallery_ids[gi] == qid && split.gallery_cams[gi] == qcam {
                continue; // junk: same id, same camera
            }
            order.push((sq_dist(features_q.row(qi), features_g.row(gi)), gi));
        }
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite").then(a.1.cmp(&b.1)));
        let mut relevant = 0usize;
        let mut ap = 0.0;
        for (rank, &(_, gi)) in order.iter().enumerate() {
            if split.gallery_ids[gi] == qid {
                relevant += 1;
                ap += relevant as f64 / (rank + 1) as f64;
            }
        }
        if relevant == 0 {
            return Err(Error::InvalidArgument(format!(
                "query {qi} has no relevant gallery entry",
            )));
        }
        ap_sum += ap / relevant as f64;
        if let Some(&(_, first)) = order.first() {
            if split.gallery_ids[first] == qid {
                rank1_hits += 1;
            }
        }
    }
    Ok((ap_sum / nq as f64, rank1_hits as f64 / nq as f64))
}

/// Run the encoder on both sides of the split, then score retrieval.
pub fn evaluate<S: Real>(model: &ModelParams<S>, split: &RetrievalSplit<S>) -> Result<(f64, f64)> {
    let fq = forward(model, &split.query)?;
    let fg = forward(model, &split.gallery)?;
    evaluate_features(split, &fq, &fg)
}
