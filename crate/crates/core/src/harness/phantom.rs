//! Segmented numerical phantoms.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dictionary::{fingerprint, ParameterGrid};
use crate::forward::MrfImage;
use crate::linalg::norm_sqr_slice;
use crate::{Error, Result};

/// `(T1 ms, T2 ms, B0 Hz)` of the five brain tissues, labels 1 to 5.
pub const CSF: [f64; 3] = [5012.0, 512.0, -20.0];
pub const GREY_MATTER: [f64; 3] = [1545.0, 83.0, -40.0];
pub const WHITE_MATTER: [f64; 3] = [811.0, 77.0, -30.0];
pub const ADIPOSE: [f64; 3] = [530.0, 77.0, 50.0];
pub const SKIN_MUSCLE: [f64; 3] = [1425.0, 41.0, 250.0];

const BRAIN_TISSUES: [[f64; 3]; 5] = [CSF, GREY_MATTER, WHITE_MATTER, ADIPOSE, SKIN_MUSCLE];
const BRAIN_PD: [f64; 5] = [1.0, 0.86, 0.77, 0.9, 0.7];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Layout {
    /// Concentric head-like regions using the five brain tissues.
    #[default]
    BrainwebLike,
    /// A `rows × cols` mosaic inside a one-voxel background border; block
    /// `b` gets tissue `b mod tissues.len()` and label `1 + that index`.
    Blocks { rows: usize, cols: usize, tissues: Vec<[f64; 3]> },
    /// JSON phantom description, see [`CustomPhantom`].
    CustomFile(PathBuf),
}

/// On-disk phantom: row-major labels, a parameter triple per nonzero label
/// and optional proton densities (default 1 inside the object).
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomPhantom {
    pub h: usize,
    pub w: usize,
    pub labels: Vec<u32>,
    pub params: BTreeMap<u32, [f64; 3]>,
    #[serde(default)]
    pub pd: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub h: usize,
    pub w: usize,
    /// Row-major segment labels; 0 is background.
    pub labels: Vec<u32>,
    pub params: BTreeMap<u32, [f64; 3]>,
    pub pd: Vec<f64>,
}

fn brainweb_label(h: usize, w: usize, r: usize, c: usize) -> u32 {
    let y = 2.0 * (r as f64 + 0.5) / h as f64 - 1.0;
    let x = 2.0 * (c as f64 + 0.5) / w as f64 - 1.0;
    let e = ((x / 0.9).powi(2) + (y / 0.95).powi(2)).sqrt();
    let ventricle = |cx: f64| ((x - cx) / 0.12).powi(2) + (y / 0.28).powi(2) <= 1.0;
    match e {
        e if e > 1.0 => 0,
        e if e > 0.9 => 5,
        e if e > 0.82 => 4,
        e if e > 0.74 => 1,
        e if e > 0.56 => 2,
        _ if ventricle(-0.16) || ventricle(0.16) => 1,
        _ => 3,
    }
}

impl Phantom {
    /// Build a phantom; tissue parameters are snapped to `grid` when `snap`.
    pub fn build(h: usize, w: usize, layout: &Layout, grid: &ParameterGrid, snap: bool) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::InvalidArgument("phantom needs h, w > 0".into()));
        }
        let mut ph = match layout {
            Layout::BrainwebLike => {
                let labels: Vec<u32> =
                    (0..h * w).map(|v| brainweb_label(h, w, v / w, v % w)).collect();
                let pd = labels.iter().map(|&l| if l == 0 { 0.0 } else { BRAIN_PD[l as usize - 1] }).collect();
                let params = (1..=5).map(|l| (l, BRAIN_TISSUES[l as usize - 1])).collect();
                Phantom { h, w, labels, params, pd }
            }
            Layout::Blocks { rows, cols, tissues } => {
                if *rows == 0 || *cols == 0 || tissues.is_empty() {
                    return Err(Error::InvalidArgument("blocks layout needs rows, cols and tissues".into()));
                }
                if h < rows + 2 || w < cols + 2 {
                    return Err(Error::InvalidArgument(format!("{h}×{w} too small for {rows}×{cols} blocks")));
                }
                let (ih, iw) = (h - 2, w - 2);
                let labels: Vec<u32> = (0..h * w)
                    .map(|v| {
                        let (r, c) = (v / w, v % w);
                        if r == 0 || c == 0 || r == h - 1 || c == w - 1 {
                            return 0;
                        }
                        let b = (r - 1) * rows / ih * cols + (c - 1) * cols / iw;
                        (b % tissues.len()) as u32 + 1
                    })
                    .collect();
                let pd = labels.iter().map(|&l| if l == 0 { 0.0 } else { 1.0 }).collect();
                let params = tissues.iter().enumerate().map(|(i, &p)| (i as u32 + 1, p)).collect();
                Phantom { h, w, labels, params, pd }
            }
            Layout::CustomFile(path) => Self::load_custom(path, h, w)?,
        };
        ph.params.retain(|l, _| ph.labels.contains(l));
        if snap {
            for p in ph.params.values_mut() {
                *p = grid.snap(*p);
            }
        }
        Ok(ph)
    }

    fn load_custom(path: &Path, h: usize, w: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let c: CustomPhantom = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if (c.h, c.w) != (h, w) || c.labels.len() != h * w {
            return Err(Error::Config(format!(
                "{}: phantom is {}×{} with {} labels, expected {h}×{w}",
                path.display(),
                c.h,
                c.w,
                c.labels.len()
            )));
        }
        if let Some(l) = c.labels.iter().find(|&&l| l != 0 && !c.params.contains_key(&l)) {
            return Err(Error::Config(format!("{}: label {l} has no parameters", path.display())));
        }
        let pd = match c.pd {
            Some(pd) if pd.len() == h * w && pd.iter().all(|&p| p >= 0.0 && p.is_finite()) => pd
                .iter()
                .zip(&c.labels)
                .map(|(&p, &l)| if l == 0 { 0.0 } else { p })
                .collect(),
            Some(_) => return Err(Error::Config(format!("{}: bad pd map", path.display()))),
            None => c.labels.iter().map(|&l| if l == 0 { 0.0 } else { 1.0 }).collect(),
        };
        Ok(Phantom { h, w, labels: c.labels, params: c.params, pd })
    }

    pub fn n(&self) -> usize {
        self.h * self.w
    }

    /// Labels that occur in the map, background excluded.
    pub fn tissue_labels(&self) -> Vec<u32> {
        self.params.keys().copied().collect()
    }

    pub fn voxel_params(&self, v: usize) -> Option<[f64; 3]> {
        self.params.get(&self.labels[v]).copied()
    }

    /// `X₀[v] = pd[v] · D(params[label[v]]) / ‖D‖`.
    pub fn gt_image(&self, tr_ms: f64, l: usize) -> Result<MrfImage> {
        let atoms: BTreeMap<u32, Vec<Complex64>> = self
            .params
            .iter()
            .map(|(&lab, p)| {
                let f = fingerprint(p[0], p[1], p[2], tr_ms, l);
                let n = norm_sqr_slice(&f).sqrt();
                (lab, f.into_iter().map(|z| z / n).collect())
            })
            .collect();
        let mut data = Array2::zeros((self.n(), l));
        for (v, mut row) in data.rows_mut().into_iter().enumerate() {
            if let Some(a) = atoms.get(&self.labels[v]) {
                for (r, z) in row.iter_mut().zip(a) {
                    *r = z * self.pd[v];
                }
            }
        }
        MrfImage::new(data, self.h, self.w)
    }
}
