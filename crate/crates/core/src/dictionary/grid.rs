use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Axis values of the (T1, T2, B0) search grid. T1 and T2 are in msec, B0 in Hz.
/// Combinations with `t2 > t1` are dropped when enumerating.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterGrid {
    pub t1: Vec<f64>,
    pub t2: Vec<f64>,
    pub b0: Vec<f64>,
}

/// Parse MATLAB-style range lists such as `"[100:40:2000, 2200:200:6000]"`.
/// Each comma-separated piece is `start:step:stop`, `start:stop` or a scalar;
/// `stop` is included when it lies on the lattice.
pub fn parse_ranges(s: &str) -> Result<Vec<f64>> {
    let body = s.trim().trim_start_matches('[').trim_end_matches(']');
    let mut out = Vec::new();
    for piece in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let nums = piece
            .split(':')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidGrid(format!("cannot parse `{x}` in `{piece}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let (a, step, b) = match nums[..] {
            [a] => (a, 1.0, a),
            [a, b] => (a, 1.0, b),
            [a, step, b] => (a, step, b),
            _ => return Err(Error::InvalidGrid(format!("bad range `{piece}`"))),
        };
        if !(step > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidGrid(format!("bad range `{piece}`")));
        }
        if b < a {
            continue;
        }
        let n = ((b - a) / step + 1e-9).floor() as usize + 1;
        out.extend((0..n).map(|k| a + k as f64 * step));
    }
    Ok(out)
}

impl ParameterGrid {
    pub fn new(t1: Vec<f64>, t2: Vec<f64>, b0: Vec<f64>) -> Result<Self> {
        for (name, axis) in [("t1", &t1), ("t2", &t2), ("b0", &b0)] {
            if axis.is_empty() {
                return Err(Error::InvalidGrid(format!("{name} axis is empty")));
            }
            if axis.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidGrid(format!("{name} axis has non-finite values")));
            }
            if axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidGrid(format!("{name} axis is not strictly increasing")));
            }
        }
        if t1[0] <= 0.0 || t2[0] <= 0.0 {
            return Err(Error::InvalidGrid("relaxation times must be positive".into()));
        }
        Ok(Self { t1, t2, b0 })
    }

    pub fn from_ranges(t1: &str, t2: &str, b0: &str) -> Result<Self> {
        Self::new(parse_ranges(t1)?, parse_ranges(t2)?, parse_ranges(b0)?)
    }

    /// The brain-imaging grid used for the full-scale dictionary.
    pub fn brain() -> Self {
        Self::from_ranges(
            "[100:40:2000, 2200:200:6000]",
            "[20:2:100, 110:4:200, 220:20:600]",
            "[-250:40:-190, -50:2:50, 190:40:250]",
        )
        .expect("static grid is valid")
    }

    /// First pair of B0 values whose phase trajectories coincide at this TR,
    /// i.e. `(b − b')·TR/1000` is a nonzero integer number of cycles per frame.
    pub fn b0_alias(&self, tr_ms: f64) -> Option<(f64, f64)> {
        for (i, &a) in self.b0.iter().enumerate() {
            for &b in &self.b0[i + 1..] {
                let cycles = (b - a) * tr_ms / 1000.0;
                if (cycles - cycles.round()).abs() < 1e-9 {
                    return Some((a, b));
                }
            }
        }
        None
    }

    pub fn unfiltered_count(&self) -> usize {
        self.t1.len() * self.t2.len() * self.b0.len()
    }

    /// Surviving `(t1, t2, b0)` triples: T1 outermost, B0 innermost.
    pub fn combinations(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::new();
        for &t1 in &self.t1 {
            for &t2 in self.t2.iter().filter(|&&t2| t2 <= t1) {
                for &b0 in &self.b0 {
                    out.push([t1, t2, b0]);
                }
            }
        }
        out
    }

    pub fn count(&self) -> usize {
        self.t1
            .iter()
            .map(|&t1| self.t2.iter().filter(|&&t2| t2 <= t1).count())
            .sum::<usize>()
            * self.b0.len()
    }

    /// Grid point closest to `p` axis by axis; ties go to the smaller value.
    /// The snapped T2 is clamped to the snapped T1 when the filter would drop it.
    pub fn snap(&self, p: [f64; 3]) -> [f64; 3] {
        fn nearest(axis: &[f64], x: f64) -> f64 {
            axis.iter()
                .copied()
                .min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs()))
                .unwrap()
        }
        let t1 = nearest(&self.t1, p[0]);
        let allowed: Vec<f64> = self.t2.iter().copied().filter(|&t2| t2 <= t1).collect();
        let t2 = if allowed.is_empty() { nearest(&self.t2, p[1]) } else { nearest(&allowed, p[1]) };
        [t1, t2, nearest(&self.b0, p[2])]
    }
}
