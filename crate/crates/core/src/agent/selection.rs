use alloc::vec::Vec;

use crate::error::{config, Error, Result};
use crate::geometry::{angular_distance, AngleSet, Geometry};

/// Slack for comparing computed angular distances with window bounds.
const WINDOW_TOL: f64 = 1e-9;

/// Where the agent stands: what is measured, where it last looked and how far
/// the next look may be from there.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionState {
    pub sampled: AngleSet,
    pub last_selected: Option<usize>,
    /// `(alpha_p, alpha_q)` in degrees.
    pub window: (f64, f64),
}

/// Outcome of one selection call.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Chosen `(angle, score)` pairs, best first.
    pub picks: Vec<(usize, f64)>,
    /// Set when the window had to be widened to find enough candidates.
    pub fallback: bool,
    /// The window that was finally applied.
    pub window: (f64, f64),
}

impl Selection {
    pub fn angles(&self) -> impl Iterator<Item = usize> + '_ {
        self.picks.iter().map(|p| p.0)
    }
}

impl SelectionState {
    pub fn new(sampled: AngleSet, window: (f64, f64), geom: &Geometry) -> Result<Self> {
        let s = Self {
            sampled,
            last_selected: None,
            window,
        };
        s.validate(geom)?;
        Ok(s)
    }

    /// Windows may be degenerate (`alpha_p == alpha_q`) to force a path.
    pub fn validate(&self, geom: &Geometry) -> Result<()> {
        let (p, q) = self.window;
        if !(p.is_finite() && q.is_finite()) || p < 0.0 || p > q || q > geom.alpha_max / 2.0 {
            return Err(config("selection window needs 0 <= alpha_p <= alpha_q <= alpha_max/2"));
        }
        if let Some(last) = self.last_selected {
            if !self.sampled.contains(last) {
                return Err(config("last selected angle is not in the sampled set"));
            }
        }
        Ok(())
    }

    /// Marks the picks as sampled; the best pick becomes the new anchor.
    pub fn record(&mut self, sel: &Selection) {
        for a in sel.angles() {
            self.sampled.insert(a);
        }
        if let Some(&(best, _)) = sel.picks.first() {
            self.last_selected = Some(best);
        }
    }
}

fn feasible(state: &SelectionState, window: (f64, f64), geom: &Geometry) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for i in 0..geom.num_angles {
        if state.sampled.contains(i) {
            continue;
        }
        match state.last_selected {
            None => out.push(i),
            Some(last) => {
                let d = angular_distance(i, last, geom)?;
                if d >= window.0 - WINDOW_TOL && d <= window.1 + WINDOW_TOL {
                    out.push(i);
                }
            }
        }
    }
    Ok(out)
}

/// Picks the `k` best-scoring unsampled angles whose distance to the last pick
/// lies in the window. Ties go to the lower index.
///
/// When fewer than `k` angles qualify, `alpha_q` is doubled until enough do.
/// If even a half-turn window is too narrow the lower bound is dropped as well.
pub fn select_topk_in_range(
    scores: &[f64],
    state: &SelectionState,
    k: usize,
    geom: &Geometry,
) -> Result<Selection> {
    if k == 0 {
        return Err(config("must select at least one angle"));
    }
    if scores.len() != geom.num_angles {
        return Err(Error::Shape {
            expected: (1, geom.num_angles),
            actual: (1, scores.len()),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical {
            iteration: 0,
            what: "non-finite candidate score",
        });
    }
    state.validate(geom)?;
    let unsampled = geom.num_angles - state.sampled.len();
    if unsampled == 0 || unsampled < k {
        return Err(Error::Exhausted);
    }
    let half = geom.alpha_max / 2.0;
    let mut window = state.window;
    let mut fallback = false;
    let mut cands = feasible(state, window, geom)?;
    while cands.len() < k {
        fallback = true;
        if window.1 < half {
            window.1 = (window.1 * 2.0).max(geom.angle_step()).min(half);
        } else {
            // widening cannot help any more; only the lower bound excludes
            window.0 = 0.0;
        }
        cands = feasible(state, window, geom)?;
    }
    cands.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    cands.truncate(k);
    Ok(Selection {
        picks: cands.into_iter().map(|i| (i, scores[i])).collect(),
        fallback,
        window,
    })
}
