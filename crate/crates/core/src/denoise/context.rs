//! Subsequence partitions and context neighbourhoods.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Window centres (1-based) split into `2k+1` subsequences whose windows
/// never overlap within a subsequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsequencePlan {
    pub n: usize,
    pub k: usize,
    centers: Vec<Vec<usize>>,
}

impl SubsequencePlan {
    /// Centres of subsequence `index` in `1..=2k+1`.
    pub fn centers(&self, index: usize) -> Result<&[usize]> {
        if index == 0 || index > self.centers.len() {
            return Err(Error::invalid(format!(
                "subsequence index {index} outside 1..={}",
                self.centers.len()
            )));
        }
        Ok(&self.centers[index - 1])
    }

    pub fn subsequences(&self) -> impl Iterator<Item = &[usize]> {
        self.centers.iter().map(|c| c.as_slice())
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

/// Subsequence `i` owns centres `i+k, i+k+(2k+1), ...` inside `[k+1, n-k]`.
pub fn partition_subsequences(n: usize, k: usize) -> Result<SubsequencePlan> {
    let width = 2 * k + 1;
    if n < width {
        return Err(Error::invalid(format!(
            "sequence of length {n} is shorter than one window of {width}"
        )));
    }
    let centers = (1..=width)
        .map(|i| (i + k..=n - k).step_by(width).collect())
        .collect();
    Ok(SubsequencePlan { n, k, centers })
}

/// Shape of the neighbourhood forming one super-symbol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextShape {
    /// `2k+1` consecutive samples (along rows for images).
    Window,
    /// Centre pixel with its four nearest neighbours.
    Cross,
    /// Arbitrary `(row, col)` offsets; must contain `(0, 0)`.
    Offsets(Vec<(i32, i32)>),
}

/// Context positions over a sequence or raster: offsets of every tuple
/// member, and valid centres grouped into classes of non-overlapping
/// neighbourhoods. Indices are 0-based.
#[derive(Debug, Clone)]
pub struct ContextLayout {
    offsets: Vec<isize>,
    center_slot: usize,
    classes: Vec<Vec<usize>>,
    len: usize,
}

impl ContextLayout {
    /// Sliding windows of half-width `k` over a 1-D sequence.
    pub fn sequence(n: usize, k: usize) -> Result<Self> {
        let plan = partition_subsequences(n, k)?;
        Ok(ContextLayout {
            offsets: (-(k as isize)..=k as isize).collect(),
            center_slot: k,
            classes: plan
                .subsequences()
                .map(|c| c.iter().map(|v| v - 1).collect())
                .collect(),
            len: n,
        })
    }

    /// Neighbourhoods over a `rows x cols` raster stored row-major.
    pub fn raster(rows: usize, cols: usize, shape: &ContextShape, k: usize) -> Result<Self> {
        let mut rel: Vec<(i32, i32)> = match shape {
            ContextShape::Window => {
                if k == 0 {
                    return Err(Error::invalid("window context needs k >= 1"));
                }
                (-(k as i32)..=k as i32).map(|c| (0, c)).collect()
            }
            ContextShape::Cross => vec![(-1, 0), (0, -1), (0, 0), (0, 1), (1, 0)],
            ContextShape::Offsets(v) => v.clone(),
        };
        rel.sort();
        rel.dedup();
        let center_slot = rel
            .iter()
            .position(|&p| p == (0, 0))
            .ok_or_else(|| Error::invalid("context offsets must include the centre (0, 0)"))?;
        let (rmin, rmax) = (rel.iter().map(|p| p.0).min().unwrap(), rel.iter().map(|p| p.0).max().unwrap());
        let (cmin, cmax) = (rel.iter().map(|p| p.1).min().unwrap(), rel.iter().map(|p| p.1).max().unwrap());
        let (height, width) = ((rmax - rmin + 1) as usize, (cmax - cmin + 1) as usize);
        if rows < height || cols < width {
            return Err(Error::invalid(format!(
                "raster {rows}x{cols} is smaller than the {height}x{width} context"
            )));
        }
        let offsets = rel
            .iter()
            .map(|&(r, c)| r as isize * cols as isize + c as isize)
            .collect();
        // class of a centre: neighbourhoods in one class are pairwise disjoint
        let cross = matches!(shape, ContextShape::Cross);
        let n_classes = if cross { 5 } else { height * width };
        let mut classes = vec![Vec::new(); n_classes];
        for r in (-rmin) as usize..(rows as i32 - rmax) as usize {
            for c in (-cmin) as usize..(cols as i32 - cmax) as usize {
                let class = if cross {
                    (r + 2 * c) % 5
                } else {
                    (r % height) * width + c % width
                };
                classes[class].push(r * cols + c);
            }
        }
        Ok(ContextLayout {
            offsets,
            center_slot,
            classes,
            len: rows * cols,
        })
    }

    /// Tuple length.
    pub fn width(&self) -> usize {
        self.offsets.len()
    }

    pub fn center_slot(&self) -> usize {
        self.center_slot
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Writes the tuple centred at `center` into `out`.
    pub fn gather(&self, data: &[f64], center: usize, out: &mut [f64]) {
        for (o, off) in out.iter_mut().zip(&self.offsets) {
            *o = data[(center as isize + off) as usize];
        }
    }

    /// All tuples of one class, stored contiguously.
    pub fn tuples(&self, data: &[f64], class: usize) -> Vec<f64> {
        let w = self.width();
        let mut out = vec![0.0; self.classes[class].len() * w];
        for (slot, &c) in out.chunks_mut(w).zip(&self.classes[class]) {
            self.gather(data, c, slot);
        }
        out
    }

    /// Marks positions that are the centre of some full neighbourhood.
    pub fn interior_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.len];
        for c in self.classes.iter().flatten() {
            mask[*c] = true;
        }
        mask
    }
}
