use serde::{Deserialize, Serialize};

use super::BayesOptError;
use crate::forest::ForestParams;

/// Dimensions of the search cube: trees, depth, training proportion.
pub const DIM: usize = 3;

/// Box bounds for the tuned triple, mapped affinely onto `[0, 1]^3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub n_trees: (usize, usize),
    pub max_depth: (usize, usize),
    pub train_proportion: (f64, f64),
}

impl Default for ParameterSpace {
    fn default() -> Self {
        Self {
            n_trees: (1, 200),
            max_depth: (1, 20),
            train_proportion: (0.1, 1.0),
        }
    }
}

fn unit(value: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((value - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

fn round_into(u: f64, (lo, hi): (usize, usize)) -> usize {
    let raw = lo as f64 + u.clamp(0.0, 1.0) * (hi - lo) as f64;
    (raw.round() as usize).clamp(lo, hi)
}

impl ParameterSpace {
    pub fn validate(&self) -> Result<(), BayesOptError> {
        let (t_lo, t_hi) = self.n_trees;
        let (d_lo, d_hi) = self.max_depth;
        let (p_lo, p_hi) = self.train_proportion;
        if t_lo == 0 || t_lo > t_hi {
            return Err(BayesOptError::InvalidSpace(format!(
                "n_trees bounds [{t_lo}, {t_hi}] need 1 <= lo <= hi"
            )));
        }
        if d_lo == 0 || d_lo > d_hi {
            return Err(BayesOptError::InvalidSpace(format!(
                "max_depth bounds [{d_lo}, {d_hi}] need 1 <= lo <= hi"
            )));
        }
        if !(p_lo > 0.0 && p_lo <= p_hi && p_hi <= 1.0) {
            return Err(BayesOptError::InvalidSpace(format!(
                "train_proportion bounds [{p_lo}, {p_hi}] need 0 < lo <= hi <= 1"
            )));
        }
        Ok(())
    }

    /// Unit-cube coordinates of `params`. Unlimited depth maps to the upper
    /// depth bound.
    pub fn normalize(&self, params: &ForestParams) -> [f64; DIM] {
        let depth = params.max_depth.unwrap_or(self.max_depth.1);
        [
            unit(params.n_trees as f64, self.n_trees.0 as f64, self.n_trees.1 as f64),
            unit(depth as f64, self.max_depth.0 as f64, self.max_depth.1 as f64),
            unit(params.train_proportion, self.train_proportion.0, self.train_proportion.1),
        ]
    }

    /// Maps a cube point to parameters, rounding the integer coordinates to
    /// the nearest value within bounds.
    pub fn denormalize(&self, point: &[f64; DIM]) -> ForestParams {
        let (p_lo, p_hi) = self.train_proportion;
        let p = (p_lo + point[2].clamp(0.0, 1.0) * (p_hi - p_lo)).clamp(p_lo, p_hi);
        ForestParams::new(
            round_into(point[0], self.n_trees),
            Some(round_into(point[1], self.max_depth)),
            p,
        )
    }

    /// The cube point actually evaluated for `point` after rounding.
    pub fn snap(&self, point: &[f64; DIM]) -> [f64; DIM] {
        self.normalize(&self.denormalize(point))
    }
}

/// One evaluated setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Unit-cube coordinates of `params`.
    pub point: [f64; DIM],
    pub params: ForestParams,
    pub value: f64,
}

/// Radical inverse of `index` in `base`: the Halton sequence coordinate.
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut result = 0.0;
    let mut fraction = 1.0 / base as f64;
    while index > 0 {
        result += (index % base) as f64 * fraction;
        index /= base;
        fraction /= base as f64;
    }
    result
}

const BASES: [u64; DIM] = [2, 3, 5];

/// Halton point `index` shifted by `offset` modulo 1.
pub(crate) fn rotated_halton(index: u64, offset: &[f64; DIM]) -> [f64; DIM] {
    let mut point = [0.0; DIM];
    for d in 0..DIM {
        let v = halton(index, BASES[d]) + offset[d];
        point[d] = v - v.floor();
    }
    point
}
