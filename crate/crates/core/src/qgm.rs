//! Query-guided filtering of grounded detection proposals.
//!
//! Each proposal carries two grounding scores: one against the specific
//! prompt ("red ball") and one against the general prompt ("ball"). The
//! top-`kappa` proposals by specific score become queries (templates). Every
//! proposal whose general score reaches `t_gen` is a candidate, and a
//! candidate survives when its backbone feature is close enough (cosine
//! `>= tau_sim`) to at least one query. The output is the queries followed
//! by the surviving candidates.
//!
//! Proposals are referred to by their index in the input slice; that index
//! is their identity for deduplication.

use crate::appearance::{cosine, Feature};
use crate::error::{Error, Result};
use crate::geometry::BBox;

pub const DEFAULT_KAPPA: usize = 5;
pub const DEFAULT_T_GEN: f64 = 0.3;
pub const DEFAULT_TAU_SIM: f64 = 0.85;

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub frame: u32,
    pub bbox: BBox,
    /// Specific-prompt grounding score (max over prompt tokens).
    pub s_spec: f64,
    /// General-prompt grounding score (max over prompt tokens).
    pub s_gen: f64,
    /// Backbone visual feature of the proposal region.
    pub feature: Feature,
}

impl Proposal {
    pub fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        for (name, s) in [("s_spec", self.s_spec), ("s_gen", self.s_gen)] {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub kappa: usize,
    pub t_gen: f64,
    pub tau_sim: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            kappa: DEFAULT_KAPPA,
            t_gen: DEFAULT_T_GEN,
            tau_sim: DEFAULT_TAU_SIM,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kappa < 1 {
            return Err(Error::config("kappa must be at least 1"));
        }
        for (name, v) in [("t_gen", self.t_gen), ("tau_sim", self.tau_sim)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Indices of the `min(kappa, len)` proposals with the highest specific
/// score, best first; equal scores keep input order.
pub fn select_queries(props: &[Proposal], kappa: usize) -> Result<Vec<usize>> {
    if props.is_empty() {
        return Err(Error::invalid("cannot select queries from an empty proposal set"));
    }
    let mut idx: Vec<usize> = (0..props.len()).collect();
    // stable sort: ties stay in index order
    idx.sort_by(|&a, &b| props[b].s_spec.total_cmp(&props[a].s_spec));
    idx.truncate(kappa);
    Ok(idx)
}

/// Indices of proposals with `s_gen >= t_gen`, in input order.
pub fn select_candidates(props: &[Proposal], t_gen: f64) -> Vec<usize> {
    props
        .iter()
        .enumerate()
        .filter(|(_, p)| p.s_gen >= t_gen)
        .map(|(i, _)| i)
        .collect()
}

/// Best cosine between a proposal's feature and any query's feature.
pub fn max_query_similarity(props: &[Proposal], queries: &[usize], idx: usize) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for &q in queries {
        best = best.max(cosine(&props[q].feature, &props[idx].feature)?);
    }
    Ok(best)
}

/// Queries first, then every candidate (not already a query) whose best
/// query similarity reaches `tau_sim`, in candidate order.
pub fn qgm_filter(props: &[Proposal], queries: &[usize], candidates: &[usize], tau_sim: f64) -> Result<Vec<usize>> {
    if queries.is_empty() {
        return Err(Error::invalid("query-guided filtering needs at least one query"));
    }
    if tau_sim.is_nan() {
        return Err(Error::invalid("tau_sim is NaN"));
    }
    let mut keep = vec![false; props.len()];
    let mut out = Vec::with_capacity(queries.len() + candidates.len());
    for &q in queries {
        if !keep[q] {
            keep[q] = true;
            out.push(q);
        }
    }
    for &c in candidates {
        if keep[c] {
            continue;
        }
        if max_query_similarity(props, queries, c)? >= tau_sim {
            keep[c] = true;
            out.push(c);
        }
    }
    Ok(out)
}

/// Full filter over one image's proposals.
pub fn filter_proposals(props: &[Proposal], cfg: &FilterConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    for p in props {
        p.validate()?;
    }
    let queries = select_queries(props, cfg.kappa)?;
    let candidates = select_candidates(props, cfg.t_gen);
    qgm_filter(props, &queries, &candidates, cfg.tau_sim)
}
