use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Graph, Group, ParamId, ParamStore, Tensor, Var};

fn uniform_tensor(rng: &mut impl Rng, shape: Vec<usize>, bound: f64) -> Tensor {
    let n = shape.iter().product();
    let values = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape, values).expect("shape product matches")
}

/// Fully-connected layer `y = W x + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    /// Registers `<name>.w` and `<name>.b`, uniform in ±1/sqrt(input).
    pub fn register(
        store: &mut ParamStore,
        name: &str,
        group: Group,
        input: usize,
        output: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let bound = 1.0 / (input as f64).sqrt();
        let weight = store.register(format!("{name}.w"), group, uniform_tensor(rng, vec![output, input], bound))?;
        let bias = store.register(format!("{name}.b"), group, uniform_tensor(rng, vec![output], bound))?;
        Ok(Self { weight, bias, input, output })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        g.affine(&[(w, x)], Some(b))
    }
}

/// Input-to-gates (4H x I), hidden-to-gates (4H x H) and bias (4H), gate
/// order input, forget, cell candidate, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmWeights {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmWeights {
    pub fn register(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let bound = 1.0 / (hidden as f64).sqrt();
        let w_ih = store.register(format!("{name}.w_ih"), Group::Rae, uniform_tensor(rng, vec![4 * hidden, input], bound))?;
        let w_hh = store.register(format!("{name}.w_hh"), Group::Rae, uniform_tensor(rng, vec![4 * hidden, hidden], bound))?;
        let bias = store.register(format!("{name}.b"), Group::Rae, uniform_tensor(rng, vec![4 * hidden], bound))?;
        Ok(Self { w_ih, w_hh, bias, input, hidden })
    }

    /// One recurrence step on graph nodes. Shapes are trusted; see [`lstm_step`].
    pub fn step(&self, g: &mut Graph, x: Var, h: Var, c: Var) -> (Var, Var) {
        let w_ih = g.param(self.w_ih);
        let w_hh = g.param(self.w_hh);
        let b = g.param(self.bias);
        let gates = g.affine(&[(w_ih, x), (w_hh, h)], Some(b));
        let packed = g.lstm_cell(gates, c);
        let h_next = g.slice(packed, 0, self.hidden);
        let c_next = g.slice(packed, self.hidden, self.hidden);
        (h_next, c_next)
    }
}

/// Checked LSTM step: validates `x`, `h`, `c` against the weight dimensions.
pub fn lstm_step(g: &mut Graph, x: Var, h: Var, c: Var, w: &LstmWeights) -> Result<(Var, Var)> {
    let store = g.store();
    let check = |what: &str, got: usize, want: usize| {
        if got == want {
            Ok(())
        } else {
            Err(Error::Config(format!("lstm {what} has length {got}, weights expect {want}")))
        }
    };
    check("input x_t", g.value(x).len(), w.input)?;
    check("hidden state h", g.value(h).len(), w.hidden)?;
    check("cell state c", g.value(c).len(), w.hidden)?;
    check("w_ih rows", store.tensor(w.w_ih).dims2()?.0, 4 * w.hidden)?;
    check("w_ih columns", store.tensor(w.w_ih).dims2()?.1, w.input)?;
    check("w_hh columns", store.tensor(w.w_hh).dims2()?.1, w.hidden)?;
    check("bias", store.tensor(w.bias).len(), 4 * w.hidden)?;
    Ok(w.step(g, x, h, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::graph::sigmoid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zeroed(store: &mut ParamStore) {
        let ids: Vec<ParamId> = store.iter().map(|(i, _)| i).collect();
        for pid in ids {
            store.tensor_mut(pid).values_mut().fill(0.0);
        }
    }

    fn run(store: &ParamStore, w: &LstmWeights, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut g = Graph::new(store);
        let (x, h, c) = (g.constant(x.to_vec()), g.constant(h.to_vec()), g.constant(c.to_vec()));
        let (hn, cn) = lstm_step(&mut g, x, h, c, w).unwrap();
        (g.value(hn).to_vec(), g.value(cn).to_vec())
    }

    #[test]
    fn zero_weights_zero_state_stay_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let w = LstmWeights::register(&mut store, "l", 3, 4, &mut rng).unwrap();
        zeroed(&mut store);
        let (h, c) = run(&store, &w, &[0.4, -1.0, 2.0], &[0.0; 4], &[0.0; 4]);
        assert_eq!(h, vec![0.0; 4]);
        assert_eq!(c, vec![0.0; 4]);
    }

    #[test]
    fn zero_weights_unit_cell_halves() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let w = LstmWeights::register(&mut store, "l", 2, 3, &mut rng).unwrap();
        zeroed(&mut store);
        let (h, c) = run(&store, &w, &[1.0, 1.0], &[0.0; 3], &[1.0; 3]);
        for k in 0..3 {
            assert_eq!(c[k], 0.5);
            assert!((h[k] - 0.5 * 0.5f64.tanh()).abs() < 1e-15);
            assert!((h[k] - 0.2311).abs() < 1e-4);
        }
    }

    /// Scalar recomputation of the four gate formulas.
    fn reference_cell(store: &ParamStore, w: &LstmWeights, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let wih = store.tensor(w.w_ih).values();
        let whh = store.tensor(w.w_hh).values();
        let b = store.tensor(w.bias).values();
        let (n_in, n_h) = (w.input, w.hidden);
        let pre = |row: usize| {
            let mut s = b[row];
            for j in 0..n_in {
                s += wih[row * n_in + j] * x[j];
            }
            for j in 0..n_h {
                s += whh[row * n_h + j] * h[j];
            }
            s
        };
        let mut h_out = vec![0.0; n_h];
        let mut c_out = vec![0.0; n_h];
        for k in 0..n_h {
            let i = sigmoid(pre(k));
            let f = sigmoid(pre(n_h + k));
            let g = pre(2 * n_h + k).tanh();
            let o = sigmoid(pre(3 * n_h + k));
            c_out[k] = f * c[k] + i * g;
            h_out[k] = o * c_out[k].tanh();
        }
        (h_out, c_out)
    }

    #[test]
    fn random_weights_match_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        let w = LstmWeights::register(&mut store, "l", 3, 3, &mut rng).unwrap();
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (h1, c1) = run(&store, &w, &x, &h, &c);
        let (h2, c2) = reference_cell(&store, &w, &x, &h, &c);
        for k in 0..3 {
            assert!((h1[k] - h2[k]).abs() < 1e-14);
            assert!((c1[k] - c2[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn shape_mismatch_names_the_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let w = LstmWeights::register(&mut store, "l", 3, 4, &mut rng).unwrap();
        let mut g = Graph::new(&store);
        let (x, h, c) = (g.constant(vec![0.0; 2]), g.constant(vec![0.0; 4]), g.constant(vec![0.0; 4]));
        let err = lstm_step(&mut g, x, h, c, &w).unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("input x_t")), "{err}");
    }
}
