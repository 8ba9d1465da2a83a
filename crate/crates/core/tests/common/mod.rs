//! Independent reference implementations for the test suites. Each one takes
//! the slow, obvious route so that agreement with the library means something.
#![allow(dead_code)]

/// Connected components by recursive-style DFS with an explicit stack.
/// Regions are returned as ascending member lists, ordered by first member.
pub fn flood_fill(bits: &[bool], w: usize, h: usize, eight: bool) -> Vec<Vec<usize>> {
    let mut seen = vec![false; bits.len()];
    let mut out = Vec::new();
    for start in 0..bits.len() {
        if !bits[start] || seen[start] {
            continue;
        }
        let mut members = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            members.push(i);
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if (dx == 0 && dy == 0) || (!eight && dx != 0 && dy != 0) {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if bits[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Members of each labelled region, in label order.
pub fn regions_from_labels(labels: &[u32], count: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); count];
    for (i, &l) in labels.iter().enumerate() {
        if l != 0 {
            out[l as usize - 1].push(i);
        }
    }
    out
}

/// Keeps flood-fill regions of at least `min_area` pixels.
pub fn filter_oracle(bits: &[bool], w: usize, h: usize, eight: bool, min_area: usize) -> Vec<bool> {
    let mut out = vec![false; bits.len()];
    for r in flood_fill(bits, w, h, eight) {
        if r.len() >= min_area {
            for i in r {
                out[i] = true;
            }
        }
    }
    out
}

/// Erase the border band, then flood-fill area filter.
pub fn border_oracle(bits: &[bool], w: usize, h: usize, margin: usize, min_area: usize) -> Vec<bool> {
    let erased: Vec<bool> = (0..bits.len())
        .map(|i| {
            let (x, y) = (i % w, i / w);
            bits[i] && x >= margin && y >= margin && x + margin < w && y + margin < h
        })
        .collect();
    filter_oracle(&erased, w, h, true, min_area)
}

/// O(N^2) DFT; returns `(re, im)` per bin.
pub fn naive_dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * (k * t % n) as f64 / n as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            (re, im)
        })
        .collect()
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix (row-major `n x n`).
/// Returns eigenvalues descending and matching unit eigenvectors.
pub fn jacobi_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut a = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order.iter().map(|&c| (0..n).map(|r| v[r * n + c]).collect()).collect();
    (values, vectors)
}

/// Least squares through the normal equations, solved by Gaussian
/// elimination with partial pivoting. Returns ascending-power coefficients.
pub fn polyfit_normal(x: &[f64], y: &[f64], degree: usize) -> Vec<f64> {
    let m = degree + 1;
    let mut a = vec![0.0; m * (m + 1)];
    for (xi, yi) in x.iter().zip(y) {
        let pows: Vec<f64> = (0..m).map(|k| xi.powi(k as i32)).collect();
        for r in 0..m {
            for c in 0..m {
                a[r * (m + 1) + c] += pows[r] * pows[c];
            }
            a[r * (m + 1) + m] += pows[r] * yi;
        }
    }
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&i, &j| a[i * (m + 1) + col].abs().total_cmp(&a[j * (m + 1) + col].abs()))
            .unwrap();
        for c in 0..=m {
            a.swap(col * (m + 1) + c, piv * (m + 1) + c);
        }
        let d = a[col * (m + 1) + col];
        for r in 0..m {
            if r == col {
                continue;
            }
            let f = a[r * (m + 1) + col] / d;
            for c in col..=m {
                a[r * (m + 1) + c] -= f * a[col * (m + 1) + c];
            }
        }
    }
    (0..m).map(|r| a[r * (m + 1) + m] / a[r * (m + 1) + r]).collect()
}

/// Two-pass population mean and standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Linear-interpolation percentile by full sort.
pub fn sort_percentile(v: &[f64], p: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = p / 100.0 * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
}

/// Dilated-intersection consensus by scanning each `(2r+1)^2` neighbourhood.
pub fn consensus_scan(a: &[bool], b: &[bool], w: usize, h: usize, r: usize) -> Vec<bool> {
    let near = |m: &[bool], x: usize, y: usize| {
        let r = r as i64;
        (-r..=r).any(|dy| {
            (-r..=r).any(|dx| {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 && m[ny as usize * w + nx as usize]
            })
        })
    };
    (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            (a[i] && near(b, x, y)) || (b[i] && near(a, x, y))
        })
        .collect()
}

/// Dice by counting.
pub fn dice(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count() as f64;
    let total = (a.iter().filter(|x| **x).count() + b.iter().filter(|x| **x).count()) as f64;
    if total == 0.0 {
        1.0
    } else {
        2.0 * inter / total
    }
}
