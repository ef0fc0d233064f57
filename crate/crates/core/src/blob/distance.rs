//! Exact Euclidean distance transform (separable lower-envelope method).

use crate::grid::BinaryMask;

/// Grid of real values with the dims of the mask it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct RealGrid {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl RealGrid {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

/// 1-D squared distance transform of a sampled function: `out[q] = min_p (q - p)^2 + f[p]`.
fn lower_envelope(f: &[f64], out: &mut [f64], vertices: &mut [usize], bounds: &mut [f64]) {
    let n = f.len();
    let finite: Vec<usize> = (0..n).filter(|&q| f[q].is_finite()).collect();
    if finite.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    vertices[0] = finite[0];
    bounds[0] = f64::NEG_INFINITY;
    bounds[1] = f64::INFINITY;
    let intersect =
        |q: usize, v: usize| ((f[q] + (q * q) as f64) - (f[v] + (v * v) as f64)) / (2.0 * (q as f64 - v as f64));
    for &q in &finite[1..] {
        let mut s = intersect(q, vertices[k]);
        while s <= bounds[k] {
            k -= 1;
            s = intersect(q, vertices[k]);
        }
        k += 1;
        vertices[k] = q;
        bounds[k] = s;
        bounds[k + 1] = f64::INFINITY;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while bounds[k + 1] < q as f64 {
            k += 1;
        }
        let v = vertices[k];
        let d = q as f64 - v as f64;
        *o = d * d + f[v];
    }
}

/// Distance from each true pixel to the nearest false pixel, 0 on false pixels.
///
/// Pixels beyond the image border are not background. When the mask has no
/// false pixel at all, every true pixel gets `height + width`.
pub fn distance_transform(mask: &BinaryMask) -> RealGrid {
    let (h, w) = (mask.height(), mask.width());
    let cap = (h + w) as f64;
    let n = h.max(w);
    let mut sq: Vec<f64> = mask
        .values()
        .iter()
        .map(|&fg| if fg { f64::INFINITY } else { 0.0 })
        .collect();

    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut vertices = vec![0usize; n];
    let mut bounds = vec![0.0; n + 1];

    for c in 0..w {
        for r in 0..h {
            f[r] = sq[r * w + c];
        }
        lower_envelope(&f[..h], &mut out[..h], &mut vertices, &mut bounds);
        for r in 0..h {
            sq[r * w + c] = out[r];
        }
    }
    for r in 0..h {
        let row = &mut sq[r * w..(r + 1) * w];
        f[..w].copy_from_slice(row);
        lower_envelope(&f[..w], &mut out[..w], &mut vertices, &mut bounds);
        row.copy_from_slice(&out[..w]);
    }

    RealGrid {
        height: h,
        width: w,
        values: sq
            .into_iter()
            .map(|d| if d.is_finite() { d.sqrt().min(cap) } else { cap })
            .collect(),
    }
}
