//! Piecewise cubic Hermite interpolation with Fritsch-Carlson slopes
//! (shape preserving, C¹), applied separately to real and imaginary parts.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Pchip {
    x: Arc<[f64]>,
    y: Vec<Complex64>,
    d: Vec<Complex64>,
}

fn slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let del: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut d = vec![0.0; n];
    if n == 2 {
        d[0] = del[0];
        d[1] = del[0];
        return d;
    }
    for k in 1..n - 1 {
        if del[k - 1] * del[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
        }
    }
    d[0] = end_slope(h[0], h[1], del[0], del[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    d
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

impl Pchip {
    pub fn new(x: Arc<[f64]>, y: Vec<Complex64>) -> Result<Self> {
        if x.len() < 2 || x.len() != y.len() {
            return Err(Error::Shape(format!(
                "pchip needs at least two matching samples, got {} x and {} y",
                x.len(),
                y.len()
            )));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("pchip abscissae must increase".into()));
        }
        let re: Vec<f64> = y.iter().map(|v| v.re).collect();
        let im: Vec<f64> = y.iter().map(|v| v.im).collect();
        let (dr, di) = (slopes(&x, &re), slopes(&x, &im));
        let d = dr.into_iter().zip(di).map(|(a, b)| Complex64::new(a, b)).collect();
        Ok(Pchip { x, y, d })
    }

    /// Segment index and offset from its left end; clamps to the grid.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.x.len();
        let seg = match self.x.partition_point(|&v| v <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        (seg, (x - self.x[seg]).clamp(0.0, self.x[seg + 1] - self.x[seg]))
    }

    #[inline]
    pub fn eval_at(&self, seg: usize, s: f64) -> Complex64 {
        let h = self.x[seg + 1] - self.x[seg];
        let t = s / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        self.y[seg] * h00 + self.d[seg] * (h * h10) + self.y[seg + 1] * h01 + self.d[seg + 1] * (h * h11)
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        let (seg, s) = self.locate(x);
        self.eval_at(seg, s)
    }
}
