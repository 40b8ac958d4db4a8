//! Scalar brute-force re-implementations used as reference values. They
//! follow the metric and split definitions directly, with no shared code.

pub fn mae(pred: &[f64], gt: &[bool]) -> f64 {
    let mut s = 0.0;
    for i in 0..pred.len() {
        let g = if gt[i] { 1.0 } else { 0.0 };
        s += (pred[i] - g).abs();
    }
    s / pred.len() as f64
}

pub fn dice_iou(p: &[bool], g: &[bool]) -> (f64, f64) {
    let mut inter = 0.0;
    let mut union = 0.0;
    let mut np = 0.0;
    let mut ng = 0.0;
    for i in 0..p.len() {
        if p[i] && g[i] {
            inter += 1.0;
        }
        if p[i] || g[i] {
            union += 1.0;
        }
        if p[i] {
            np += 1.0;
        }
        if g[i] {
            ng += 1.0;
        }
    }
    if union == 0.0 {
        return (1.0, 1.0);
    }
    (2.0 * inter / (np + ng), inter / union)
}

pub fn emeasure(p: &[bool], g: &[bool]) -> f64 {
    let n = p.len() as f64;
    let pf: Vec<f64> = p.iter().map(|&b| b as u8 as f64).collect();
    let gf: Vec<f64> = g.iter().map(|&b| b as u8 as f64).collect();
    let mp = pf.iter().sum::<f64>() / n;
    let mg = gf.iter().sum::<f64>() / n;
    if mg == 0.0 {
        return 1.0 - mp;
    }
    if mg == 1.0 {
        return mp;
    }
    let mut total = 0.0;
    for i in 0..p.len() {
        let a = pf[i] - mp;
        let b = gf[i] - mg;
        let phi = 2.0 * a * b / (a * a + b * b + 1e-8);
        total += (phi + 1.0).powi(2) / 4.0;
    }
    total / n
}

pub fn adaptive_binarize(pred: &[f64]) -> Vec<bool> {
    let mean = pred.iter().sum::<f64>() / pred.len() as f64;
    let tau = (2.0 * mean).min(1.0);
    pred.iter().map(|&v| v > tau).collect()
}

pub fn wfm(pred: &[f64], gt: &[bool], h: usize, w: usize) -> Option<f64> {
    let fg: Vec<(usize, usize)> = (0..h * w)
        .filter(|&i| gt[i])
        .map(|i| (i / w, i % w))
        .collect();
    if fg.is_empty() {
        return None;
    }
    let err: Vec<f64> = (0..h * w)
        .map(|i| (pred[i] - if gt[i] { 1.0 } else { 0.0 }).abs())
        .collect();
    // 7x7 Gaussian, sigma 5, normalized over the full kernel, zero outside
    let sigma2 = 25.0;
    let mut kernel = [[0.0f64; 7]; 7];
    let mut ksum = 0.0;
    for (dy, row) in kernel.iter_mut().enumerate() {
        for (dx, k) in row.iter_mut().enumerate() {
            let y = dy as f64 - 3.0;
            let x = dx as f64 - 3.0;
            *k = (-(x * x + y * y) / (2.0 * sigma2)).exp();
            ksum += *k;
        }
    }
    let alpha = 0.5f64.ln() / 5.0;
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if gt[i] {
                tp += 1.0 - err[i];
                fn_ += err[i];
                continue;
            }
            let mut smooth = 0.0;
            for (dy, row) in kernel.iter().enumerate() {
                for (dx, k) in row.iter().enumerate() {
                    let rr = r as i64 + dy as i64 - 3;
                    let cc = c as i64 + dx as i64 - 3;
                    if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w {
                        smooth += k / ksum * err[rr as usize * w + cc as usize];
                    }
                }
            }
            let dist = fg
                .iter()
                .map(|&(fr, fc)| {
                    let dr = fr as f64 - r as f64;
                    let dc = fc as f64 - c as f64;
                    (dr * dr + dc * dc).sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            fp += err[i].min(smooth) * (2.0 - (alpha * dist).exp());
        }
    }
    let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    if precision + recall == 0.0 {
        return Some(0.0);
    }
    Some(2.0 * precision * recall / (precision + recall))
}

/// Best `(feature, threshold, gain)` over every `x < t` split with `t` one of
/// the observed values, requiring hessian sums of at least `min_child` on
/// both sides and strictly positive gain.
pub fn exhaustive_split(
    x: &[Vec<f32>],
    grad: &[f64],
    hess: &[f64],
    lambda: f64,
    min_child: f64,
) -> Option<(usize, f32, f64)> {
    let n_features = x[0].len();
    let g: f64 = grad.iter().sum();
    let h: f64 = hess.iter().sum();
    let mut best: Option<(usize, f32, f64)> = None;
    for f in 0..n_features {
        let mut values: Vec<f32> = x.iter().map(|row| row[f]).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        for &t in values.iter().skip(1) {
            let (mut gl, mut hl) = (0.0, 0.0);
            for (i, row) in x.iter().enumerate() {
                if row[f] < t {
                    gl += grad[i];
                    hl += hess[i];
                }
            }
            let (gr, hr) = (g - gl, h - hl);
            if hl < min_child || hr < min_child {
                continue;
            }
            let gain =
                0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda));
            if gain > 0.0 && best.is_none_or(|b| gain > b.2) {
                best = Some((f, t, gain));
            }
        }
    }
    best
}

/// Gain of one specific split, for checking ties.
pub fn split_gain(
    x: &[Vec<f32>],
    grad: &[f64],
    hess: &[f64],
    lambda: f64,
    f: usize,
    t: f32,
) -> f64 {
    let g: f64 = grad.iter().sum();
    let h: f64 = hess.iter().sum();
    let (mut gl, mut hl) = (0.0, 0.0);
    for (i, row) in x.iter().enumerate() {
        if row[f] < t {
            gl += grad[i];
            hl += hess[i];
        }
    }
    let (gr, hr) = (g - gl, h - hl);
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda))
}
