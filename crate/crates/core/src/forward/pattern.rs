use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How the sampled line set moves from frame to frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OffsetRule {
    /// Frame `t` starts at line `t mod spacing`.
    #[default]
    Cyclic,
    /// Every frame samples the same lines.
    Fixed,
}

/// JSON description of an EPI-style line pattern.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSpec {
    pub h: usize,
    pub w: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub lines_per_frame: usize,
    #[serde(default)]
    pub offset_rule: OffsetRule,
}

/// Per-frame sets of sampled k-space locations, flattened row-major over `h × w`.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingPattern {
    h: usize,
    w: usize,
    frames: Vec<Vec<usize>>,
}

impl SamplingPattern {
    pub fn new(h: usize, w: usize, frames: Vec<Vec<usize>>) -> Result<Self> {
        let n = h * w;
        if n == 0 || frames.is_empty() {
            return Err(Error::InvalidArgument("pattern needs a nonempty grid and at least one frame".into()));
        }
        let m = frames[0].len();
        for (t, f) in frames.iter().enumerate() {
            if f.len() != m || m == 0 {
                return Err(Error::InvalidArgument(format!(
                    "frame {t} samples {} locations, expected {m} > 0",
                    f.len()
                )));
            }
            let mut sorted = f.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != m {
                return Err(Error::InvalidArgument(format!("frame {t} repeats a location")));
            }
            if sorted[m - 1] >= n {
                return Err(Error::IndexOutOfRange { index: sorted[m - 1], len: n });
            }
        }
        Ok(Self { h, w, frames })
    }

    /// Every location in every frame.
    pub fn full(h: usize, w: usize, l: usize) -> Result<Self> {
        Self::new(h, w, vec![(0..h * w).collect(); l])
    }

    /// `k` full rows per frame with spacing `⌊h/k⌋`; frame `t` starts at
    /// row `t mod spacing`.
    pub fn epi(h: usize, w: usize, k: usize, l: usize) -> Result<Self> {
        Self::epi_with_rule(h, w, k, l, OffsetRule::Cyclic)
    }

    pub fn epi_with_rule(h: usize, w: usize, k: usize, l: usize, rule: OffsetRule) -> Result<Self> {
        if k == 0 || k > h {
            return Err(Error::InvalidArgument(format!("lines per frame must be in 1..={h}, got {k}")));
        }
        let spacing = h / k;
        let frames = (0..l)
            .map(|t| {
                let offset = match rule {
                    OffsetRule::Cyclic => t % spacing,
                    OffsetRule::Fixed => 0,
                };
                (0..k)
                    .flat_map(|i| {
                        let row = offset + i * spacing;
                        (0..w).map(move |c| row * w + c)
                    })
                    .collect()
            })
            .collect();
        Self::new(h, w, frames)
    }

    pub fn from_spec(spec: &PatternSpec) -> Result<Self> {
        Self::epi_with_rule(spec.h, spec.w, spec.lines_per_frame, spec.l, spec.offset_rule)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: PatternSpec = serde_json::from_str(&text)?;
        Self::from_spec(&spec)
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn n(&self) -> usize {
        self.h * self.w
    }

    /// Samples per frame.
    pub fn m(&self) -> usize {
        self.frames[0].len()
    }

    pub fn frames(&self) -> usize {
        self.frames.len()
    }

    pub fn frame(&self, t: usize) -> &[usize] {
        &self.frames[t]
    }

    pub fn undersampling(&self) -> f64 {
        self.n() as f64 / self.m() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_of_256_lines() {
        let p = SamplingPattern::epi(256, 4, 16, 32).unwrap();
        assert_eq!(p.m(), 16 * 4);
        assert_eq!(p.undersampling(), 16.0);
    }

    #[test]
    fn union_over_a_cycle_covers_each_row_once() {
        let (h, w, k) = (256, 2, 16);
        let p = SamplingPattern::epi(h, w, k, 16).unwrap();
        let mut hits = vec![0; h];
        for t in 0..16 {
            for &idx in p.frame(t).iter().filter(|&&i| i % w == 0) {
                hits[idx / w] += 1;
            }
        }
        assert!(hits.iter().all(|&c| c == 1));
    }

    #[test]
    fn all_lines_is_full_sampling() {
        let p = SamplingPattern::epi(8, 5, 8, 3).unwrap();
        for t in 0..3 {
            assert_eq!(p.frame(t), (0..40).collect::<Vec<_>>().as_slice());
        }
    }

    #[test]
    fn too_many_lines() {
        assert!(SamplingPattern::epi(8, 8, 9, 1).is_err());
        assert!(SamplingPattern::epi(8, 8, 0, 1).is_err());
    }

    #[test]
    fn non_divisible_line_counts() {
        // 3 of 10 lines: spacing 3, rows {o, o+3, o+6}
        let p = SamplingPattern::epi(10, 1, 3, 4).unwrap();
        assert_eq!(p.frame(0), &[0, 3, 6]);
        assert_eq!(p.frame(2), &[2, 5, 8]);
        assert_eq!(p.frame(3), &[0, 3, 6]);
    }

    #[test]
    fn duplicates_are_rejected() {
        assert!(SamplingPattern::new(2, 2, vec![vec![0, 0]]).is_err());
        assert!(SamplingPattern::new(2, 2, vec![vec![0, 1], vec![2]]).is_err());
        assert!(SamplingPattern::new(2, 2, vec![vec![4]]).is_err());
    }

    #[test]
    fn json_spec() {
        let spec: PatternSpec =
            serde_json::from_str(r#"{"h": 16, "w": 4, "L": 5, "lines_per_frame": 4, "offset_rule": "fixed"}"#).unwrap();
        let p = SamplingPattern::from_spec(&spec).unwrap();
        assert_eq!(p.frame(0), p.frame(4));
        let bad = serde_json::from_str::<PatternSpec>(r#"{"h": 16, "w": 4, "L": 5, "lines": 4}"#);
        assert!(bad.is_err());
    }
}
