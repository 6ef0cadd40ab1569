//! Central finite-difference verification of [`Graph::backward`].

use crate::nn::{Graph, ParamId, ParamStore, Var};

/// Relative error `|a - b| / max(|a|, |b|, 1e-8)`; NaN anywhere counts as infinite.
pub fn relative_error(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        return f64::INFINITY;
    }
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares analytic gradients of `loss_fn` against `(f(p+eps) - f(p-eps)) / 2eps`
/// for every element of every parameter in `params`. Returns the worst
/// relative error. The store is restored exactly before returning.
pub fn gradient_check<F>(store: &mut ParamStore, params: &[ParamId], eps: f64, loss_fn: F) -> f64
where
    F: Fn(&mut Graph) -> Var,
{
    let analytic = {
        let mut g = Graph::new(store);
        let loss = loss_fn(&mut g);
        match g.backward(loss) {
            Ok(grads) => grads,
            Err(_) => return f64::INFINITY,
        }
    };
    let eval = |store: &ParamStore| {
        let mut g = Graph::new(store);
        let loss = loss_fn(&mut g);
        g.scalar(loss)
    };

    let mut worst = 0.0f64;
    for &pid in params {
        for j in 0..store.tensor(pid).len() {
            let original = store.tensor(pid).values()[j];
            store.tensor_mut(pid).values_mut()[j] = original + eps;
            let up = eval(store);
            store.tensor_mut(pid).values_mut()[j] = original - eps;
            let down = eval(store);
            store.tensor_mut(pid).values_mut()[j] = original;
            let numeric = (up - down) / (2.0 * eps);
            let exact = analytic.get(pid).values()[j];
            worst = worst.max(relative_error(exact, numeric));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Group, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_map_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::new();
        let w_vals: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x_vals: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = store.register("w", Group::Rae, Tensor::new(vec![3, 4], w_vals).unwrap()).unwrap();
        let x = store.register("x", Group::Rae, Tensor::vector(x_vals)).unwrap();
        let err = gradient_check(&mut store, &[w, x], 1e-5, |g| {
            let (wv, xv) = (g.param(w), g.param(x));
            let y = g.affine(&[(wv, xv)], None);
            g.sum(y)
        });
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn nan_is_reported_as_infinite() {
        assert_eq!(relative_error(f64::NAN, 1.0), f64::INFINITY);
        assert_eq!(relative_error(0.0, 0.0), 0.0);
    }

    #[test]
    fn store_is_restored() {
        let mut store = ParamStore::new();
        let x = store.register("x", Group::Rae, Tensor::vector(vec![0.1, 0.7])).unwrap();
        let before = store.clone();
        gradient_check(&mut store, &[x], 1e-5, |g| {
            let v = g.param(x);
            let t = g.tanh(v);
            g.dot(t, v)
        });
        assert_eq!(store, before);
    }
}
