use log::warn;

use crate::error::{Error, Result};

const MAX_ITERS: usize = 10_000;
const TOL: f64 = 1e-15;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn mat_vec(c: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    c.iter().map(|row| dot(row, v)).collect()
}

/// Power iteration on `c` from `start`, re-orthogonalized against `against`.
fn leading(c: &[Vec<f64>], mut v: Vec<f64>, against: Option<&[f64]>) -> Vec<f64> {
    let project_out = |v: &mut Vec<f64>| {
        if let Some(u) = against {
            let k = dot(v, u);
            v.iter_mut().zip(u).for_each(|(x, y)| *x -= k * y);
        }
    };
    project_out(&mut v);
    normalize(&mut v);
    for _ in 0..MAX_ITERS {
        let mut next = mat_vec(c, &v);
        project_out(&mut next);
        if normalize(&mut next) == 0.0 {
            return next;
        }
        let diff: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if diff < TOL {
            break;
        }
    }
    v
}

/// Top-two principal-component coordinates of each row. The covariance is
/// diagonalized by power iteration with deflation, started from the
/// centered row of largest norm, so the result is deterministic. A
/// rank-deficient second direction yields zero y coordinates.
pub fn project_latents(latents: &[Vec<f64>]) -> Result<Vec<(f64, f64)>> {
    if latents.len() < 3 {
        return Err(Error::Input(format!("projection needs at least 3 points, got {}", latents.len())));
    }
    let d = latents[0].len();
    if d == 0 || latents.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("latents differ in dimension".into()));
    }
    let n = latents.len() as f64;
    let mean: Vec<f64> = (0..d).map(|k| latents.iter().map(|r| r[k]).sum::<f64>() / n).collect();
    let centered: Vec<Vec<f64>> = latents.iter().map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect()).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in &centered {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += r[i] * r[j] / n;
            }
        }
    }
    let largest = |rows: &[Vec<f64>]| {
        rows.iter().max_by(|a, b| dot(a, a).total_cmp(&dot(b, b))).cloned().unwrap()
    };
    let scale = dot(&largest(&centered), &largest(&centered));
    if scale == 0.0 {
        return Ok(vec![(0.0, 0.0); latents.len()]);
    }
    let v1 = leading(&cov, largest(&centered), None);

    let residual: Vec<Vec<f64>> = centered
        .iter()
        .map(|r| {
            let k = dot(r, &v1);
            r.iter().zip(&v1).map(|(x, u)| x - k * u).collect()
        })
        .collect();
    let start = largest(&residual);
    let v2 = if dot(&start, &start) <= 1e-24 * scale {
        warn!("latent covariance has rank below 2; second component set to zero");
        vec![0.0; d]
    } else {
        let lambda1 = dot(&v1, &mat_vec(&cov, &v1));
        let deflated: Vec<Vec<f64>> =
            (0..d).map(|i| (0..d).map(|j| cov[i][j] - lambda1 * v1[i] * v1[j]).collect()).collect();
        leading(&deflated, start, Some(&v1))
    };
    Ok(centered.iter().map(|r| (dot(r, &v1), dot(r, &v2))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
        ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
    }

    #[test]
    fn planar_data_keeps_its_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut v: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let k = dot(&u, &v) / dot(&u, &u);
        v.iter_mut().zip(&u).for_each(|(x, y)| *x -= k * y);
        let pts: Vec<Vec<f64>> = (0..20)
            .map(|_| {
                let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0));
                u.iter().zip(&v).map(|(x, y)| 0.5 + a * x + b * y).collect()
            })
            .collect();
        let proj = project_latents(&pts).unwrap();
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                let orig: f64 = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                assert!((orig - dist(proj[i], proj[j])).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn duplicates_coincide() {
        let pts = vec![vec![1.0, 2.0, 3.0], vec![0.0, 1.0, -1.0], vec![1.0, 2.0, 3.0], vec![4.0, 0.0, 0.5]];
        let p = project_latents(&pts).unwrap();
        assert_eq!(p[0], p[2]);
    }

    #[test]
    fn collinear_points_stay_collinear() {
        let pts = vec![vec![0.0, 0.0, 0.0], vec![1.0, 2.0, -1.0], vec![3.0, 6.0, -3.0]];
        let p = project_latents(&pts).unwrap();
        let cross = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[1].1 - p[0].1) * (p[2].0 - p[0].0);
        assert!(cross.abs() < 1e-9);
        assert!(p.iter().all(|q| q.1 == 0.0));
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(project_latents(&[vec![1.0], vec![2.0]]), Err(Error::Input(_))));
    }
}
