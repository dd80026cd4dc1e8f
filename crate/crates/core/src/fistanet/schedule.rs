//! Layer-indexed step size, threshold and momentum:
//! `mu_k = sp(w1 k + c1)`, `theta_k = sp(w2 k + c2)`,
//! `rho_k = (sp(w3 k + c3) - sp(w3 + c3)) / sp(w3 k + c3)`.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{softplus, softplus_inv, Graph, NodeId};
use crate::error::{invalid, Error, Result};

/// Initial effective `(w1, c1, w2, c2, w3, c3)`.
pub const INITIAL_SCHEDULE: [f64; 6] = [-0.5, -2.0, -0.2, -1.0, 1.0, 0.0];

/// Margin kept from zero by the clamped mode.
const CLAMP_MARGIN: f64 = 1e-6;

/// How the sign constraints `w1 < 0`, `w2 < 0`, `w3 > 0` are enforced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignMode {
    /// `w1 = -sp(v1)`, `w2 = -sp(v2)`, `w3 = sp(v3)` over free `v`.
    Reparam,
    /// Raw values are the slopes, projected back after each update.
    Clamp,
    /// Raw values are the slopes, unconstrained.
    Free,
}

impl fmt::Display for SignMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignMode::Reparam => "reparam",
            SignMode::Clamp => "clamp",
            SignMode::Free => "free",
        })
    }
}

impl FromStr for SignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reparam" => Ok(SignMode::Reparam),
            "clamp" => Ok(SignMode::Clamp),
            "free" => Ok(SignMode::Free),
            _ => Err(invalid(format!("unknown sign mode `{s}` (reparam|clamp|free)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerSchedule {
    pub mu: f64,
    pub theta: f64,
    pub rho: f64,
}

/// The six raw schedule learnables in the order `v1, c1, v2, c2, v3, c3`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleParams {
    pub mode: SignMode,
    pub raw: [f64; 6],
}

impl ScheduleParams {
    /// Raw values whose effective slopes and offsets equal
    /// [`INITIAL_SCHEDULE`].
    pub fn initial(mode: SignMode) -> Self {
        let [w1, c1, w2, c2, w3, c3] = INITIAL_SCHEDULE;
        let raw = match mode {
            SignMode::Reparam => [softplus_inv(-w1), c1, softplus_inv(-w2), c2, softplus_inv(w3), c3],
            SignMode::Clamp | SignMode::Free => INITIAL_SCHEDULE,
        };
        Self { mode, raw }
    }

    /// Effective `(w1, w2, w3)`.
    pub fn slopes(&self) -> (f64, f64, f64) {
        let [v1, _, v2, _, v3, _] = self.raw;
        match self.mode {
            SignMode::Reparam => (-softplus(v1), -softplus(v2), softplus(v3)),
            SignMode::Clamp | SignMode::Free => (v1, v2, v3),
        }
    }

    pub fn eval(&self, k: usize, n_layers: usize) -> Result<LayerSchedule> {
        if k == 0 || k > n_layers {
            return Err(Error::IndexOutOfRange {
                index: k,
                max: n_layers,
            });
        }
        let (w1, w2, w3) = self.slopes();
        let [_, c1, _, c2, _, c3] = self.raw;
        let kf = k as f64;
        let s_k = softplus(w3 * kf + c3);
        let s_1 = softplus(w3 * 1.0 + c3);
        Ok(LayerSchedule {
            mu: softplus(w1 * kf + c1),
            theta: softplus(w2 * kf + c2),
            rho: (s_k - s_1) / s_k,
        })
    }

    pub fn eval_all(&self, n_layers: usize) -> Vec<LayerSchedule> {
        (1..=n_layers).map(|k| self.eval(k, n_layers).expect("k in range")).collect()
    }

    /// Clamped mode: pull the slopes back to their required signs.
    pub fn project(&mut self) {
        if self.mode == SignMode::Clamp {
            self.raw[0] = self.raw[0].min(-CLAMP_MARGIN);
            self.raw[2] = self.raw[2].min(-CLAMP_MARGIN);
            self.raw[4] = self.raw[4].max(CLAMP_MARGIN);
        }
    }
}

/// Counts violations of: `mu`, `theta` positive and strictly decreasing;
/// `rho_1 = 0`; `rho` strictly increasing inside `[0, 1)`.
pub fn schedule_violations(s: &[LayerSchedule]) -> usize {
    let mut bad = 0;
    for l in s {
        bad += usize::from(!(l.mu > 0.0));
        bad += usize::from(!(l.theta > 0.0));
        bad += usize::from(!(l.rho >= 0.0 && l.rho < 1.0));
    }
    if let Some(first) = s.first() {
        bad += usize::from(first.rho != 0.0);
    }
    for w in s.windows(2) {
        bad += usize::from(!(w[1].mu < w[0].mu));
        bad += usize::from(!(w[1].theta < w[0].theta));
        bad += usize::from(!(w[1].rho > w[0].rho));
    }
    bad
}

/// Graph nodes of the schedule for layers `1..=n_layers`, built from the six
/// raw parameter nodes with the same arithmetic as [`ScheduleParams::eval`].
pub(crate) fn schedule_nodes(
    g: &mut Graph,
    raw: &[NodeId; 6],
    mode: SignMode,
    n_layers: usize,
) -> Result<Vec<(NodeId, NodeId, NodeId)>> {
    let [v1, c1, v2, c2, v3, c3] = *raw;
    let (w1, w2, w3) = match mode {
        SignMode::Reparam => {
            let a = g.softplus(v1);
            let b = g.softplus(v2);
            (g.scale(a, -1.0), g.scale(b, -1.0), g.softplus(v3))
        }
        SignMode::Clamp | SignMode::Free => (v1, v2, v3),
    };
    let line = |g: &mut Graph, w: NodeId, c: NodeId, k: f64| -> Result<NodeId> {
        let wk = g.scale(w, k);
        let z = g.add(wk, c)?;
        Ok(g.softplus(z))
    };
    let s_1 = line(g, w3, c3, 1.0)?;
    let mut out = Vec::with_capacity(n_layers);
    for k in 1..=n_layers {
        let kf = k as f64;
        let mu = line(g, w1, c1, kf)?;
        let theta = line(g, w2, c2, kf)?;
        let s_k = line(g, w3, c3, kf)?;
        let num = g.sub(s_k, s_1)?;
        let rho = g.div(num, s_k)?;
        out.push((mu, theta, rho));
    }
    Ok(out)
}
