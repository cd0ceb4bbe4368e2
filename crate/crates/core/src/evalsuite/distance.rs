//! Exact squared Euclidean distance transform (Felzenszwalb & Huttenlocher).

use crate::par;

/// 1-D lower envelope of parabolas rooted at `f`. Infinite entries are
/// ignored; an all-infinite input stays infinite.
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    let n = f.len();
    v.clear();
    z.clear();
    for q in 0..n {
        if f[q].is_infinite() {
            continue;
        }
        let fq = f[q] + (q * q) as f64;
        loop {
            let Some(&p) = v.last() else {
                v.push(q);
                z.push(f64::NEG_INFINITY);
                break;
            };
            let s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= *z.last().unwrap() {
                v.pop();
                z.pop();
            } else {
                v.push(q);
                z.push(s);
                break;
            }
        }
    }
    if v.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Squared distance from every pixel to the nearest `true` pixel of a
/// row-major `width x height` grid. Infinite when there are no such pixels.
pub fn squared_edt(width: usize, height: usize, features: &[bool]) -> Vec<f64> {
    assert_eq!(features.len(), width * height, "feature grid size");
    if width == 0 || height == 0 {
        return Vec::new();
    }
    let columns: Vec<Vec<f64>> = par::map_range(width, |c| {
        let f: Vec<f64> = (0..height)
            .map(|r| if features[r * width + c] { 0.0 } else { f64::INFINITY })
            .collect();
        let mut out = vec![0.0; height];
        edt_1d(&f, &mut out, &mut Vec::new(), &mut Vec::new());
        out
    });
    let mut d = vec![0.0f64; width * height];
    par::for_each_chunk_mut(&mut d, width, |r, row| {
        let f: Vec<f64> = columns.iter().map(|col| col[r]).collect();
        edt_1d(&f, row, &mut Vec::new(), &mut Vec::new());
    });
    d
}
