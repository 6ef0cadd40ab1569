//! Finite-difference checks of every layer type and every training loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rprae::data::{DescriptionSequence, EmbeddingTable, MotionSequence};
use rprae::losses::{bnd_graph, stage1_graph, stage2_graph};
use rprae::model::{Forward, Model, ModelConfig};
use rprae::nn::{gradient_check, Graph, Group, Linear, LstmWeights, ParamStore, Tensor, Var};

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;
const SEEDS: u64 = 10;

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn vector(store: &mut ParamStore, name: &str, rng: &mut ChaCha8Rng, n: usize) -> rprae::nn::ParamId {
    store.register(name, Group::Rae, Tensor::vector(uniform(rng, n))).unwrap()
}

fn check_layer(build: impl Fn(&mut ParamStore, &mut ChaCha8Rng) -> Box<dyn Fn(&mut Graph) -> Var>) {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let loss = build(&mut store, &mut rng);
        let all: Vec<_> = store.iter().map(|(pid, _)| pid).collect();
        let err = gradient_check(&mut store, &all, EPS, loss);
        assert!(err < TOL, "seed {seed}: relative error {err}");
    }
}

#[test]
fn lstm_step() {
    check_layer(|s, rng| {
        let w = LstmWeights::register(s, "lstm", 3, 4, rng).unwrap();
        let (x, h, c) = (vector(s, "x", rng, 3), vector(s, "h", rng, 4), vector(s, "c", rng, 4));
        Box::new(move |g| {
            let (xv, hv, cv) = (g.param(x), g.param(h), g.param(c));
            let (h1, c1) = w.step(g, xv, hv, cv);
            let (h2, c2) = w.step(g, xv, h1, c1);
            let both = g.concat(&[h2, c2]);
            let sq = g.mul(both, both);
            g.sum(sq)
        })
    });
}

#[test]
fn fully_connected() {
    check_layer(|s, rng| {
        let l = Linear::register(s, "fc", Group::Rae, 5, 3, rng).unwrap();
        let x = vector(s, "x", rng, 5);
        Box::new(move |g| {
            let xv = g.param(x);
            let y = l.forward(g, xv);
            let t = g.tanh(y);
            g.dot(t, y)
        })
    });
}

#[test]
fn embedding_lookup() {
    check_layer(|s, rng| {
        let table = s.register("table", Group::Rae, Tensor::new(vec![4, 3], uniform(rng, 12)).unwrap()).unwrap();
        let w = vector(s, "w", rng, 3);
        Box::new(move |g| {
            let t = g.param(table);
            let (r1, r3) = (g.row(t, 1), g.row(t, 3));
            let r = g.mul(r1, r3);
            let wv = g.param(w);
            let sig = g.sigmoid(r);
            g.dot(sig, wv)
        })
    });
}

#[test]
fn softmax_cross_entropy() {
    check_layer(|s, rng| {
        let logits = vector(s, "logits", rng, 6);
        let target = rng.random_range(0..6);
        Box::new(move |g| {
            let l = g.param(logits);
            let scaled = g.scale(l, 3.0);
            g.softmax_xent(scaled, target)
        })
    });
}

#[test]
fn squared_error_and_distance() {
    check_layer(|s, rng| {
        let (a, b) = (vector(s, "a", rng, 5), vector(s, "b", rng, 5));
        Box::new(move |g| {
            let (av, bv) = (g.param(a), g.param(b));
            let se = g.squared_error(av, bv);
            let d = g.distance(av, bv);
            let diff = g.sub(se, d);
            g.add(diff, d)
        })
    });
    check_layer(|s, rng| {
        let (a, b) = (vector(s, "a", rng, 4), vector(s, "b", rng, 4));
        Box::new(move |g| {
            let (av, bv) = (g.param(a), g.param(b));
            g.distance(av, bv)
        })
    });
}

#[test]
fn hinge_away_from_its_kink() {
    check_layer(|s, rng| {
        // the loss hinges on x_k + 0.1; draws within 1e-3 of the kink are nudged off it
        let mut vals = uniform(rng, 6);
        for v in &mut vals {
            if (*v + 0.1).abs() < 1e-3 {
                *v += 0.01;
            }
        }
        let x = s.register("x", Group::Rae, Tensor::vector(vals)).unwrap();
        Box::new(move |g| {
            let xv = g.param(x);
            let shift = g.constant(vec![0.1; 6]);
            let shifted = g.add(xv, shift);
            let r = g.relu(shifted);
            let parts: Vec<Var> = (0..6).map(|k| g.slice(r, k, 1)).collect();
            let total = g.add_n(&parts);
            g.mul(total, total)
        })
    });
}

/// Central differences resolve about `1e-15 / 2 eps` in f64; components
/// below this bound would measure rounding, not the gradient.
const RESOLVABLE: f64 = 3e-6;

const TRAINABLE: [Group; 2] = [Group::Rae, Group::Retrofit];

struct Case {
    model: Model,
    descs: Vec<DescriptionSequence>,
    motions: Vec<MotionSequence>,
}

type LossFn<'a> = Box<dyn Fn(&mut Forward) -> rprae::Result<Var> + 'a>;

impl Case {
    fn draw(attempt: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(attempt);
        let table = Tensor::new(vec![6, 2], uniform(&mut rng, 12)).unwrap();
        let cfg = ModelConfig {
            action_dim: 2,
            hidden_dim: 2,
            latent_dim: 2,
            embedding_dim: 2,
            retrofit_hidden: 2,
            vocab_size: 6,
            action_decoder_layers: 2,
        };
        let model = Model::new(cfg, &EmbeddingTable::new(table).unwrap(), vec![0.0, 0.0], 3, attempt).unwrap();
        let descs = (0..2)
            .map(|_| {
                let body: Vec<usize> = (0..rng.random_range(2..4)).map(|_| rng.random_range(2..6)).collect();
                DescriptionSequence::from_body(&body, 6).unwrap()
            })
            .collect();
        let motions = (0..2)
            .map(|_| {
                let t = rng.random_range(3..5);
                MotionSequence::new(2, (0..2 * t).map(|_| rng.random_range(-0.9..0.9)).collect()).unwrap()
            })
            .collect();
        Self { model, descs, motions }
    }

    /// Action loss, description loss, binding loss, stage-1 and stage-2 objectives.
    fn losses(&self) -> Vec<(&'static str, LossFn<'_>)> {
        let (d, a) = (&self.descs, &self.motions);
        vec![
            ("action", Box::new(move |f: &mut Forward| {
                let z = f.encode_action(&a[0])?;
                Ok(f.action_loss(z, &a[0]))
            }) as LossFn),
            ("description", Box::new(move |f: &mut Forward| {
                let z = f.encode_description(&d[0])?;
                Ok(f.description_loss(z, &d[0]))
            })),
            ("binding", Box::new(move |f: &mut Forward| {
                let za = a.iter().map(|x| f.encode_action(x)).collect::<rprae::Result<Vec<_>>>()?;
                let zd = d.iter().map(|x| f.encode_description(x)).collect::<rprae::Result<Vec<_>>>()?;
                bnd_graph(f, &za, &zd, 1.0)
            })),
            ("stage-1", Box::new(move |f: &mut Forward| {
                let (dr, ar): (Vec<_>, Vec<_>) = (d.iter().collect(), a.iter().collect());
                Ok(stage1_graph(f, &dr, &ar)?.total)
            })),
            ("stage-2", Box::new(move |f: &mut Forward| {
                let pairs: Vec<_> = d.iter().zip(a).collect();
                Ok(stage2_graph(f, &pairs, 1.0)?.total)
            })),
        ]
    }

    fn smallest_gradient(&self) -> f64 {
        self.losses()
            .iter()
            .map(|(_, l)| {
                let mut f = Forward::new(&self.model);
                let v = l(&mut f).unwrap();
                let grads = f.g.backward(v).unwrap();
                TRAINABLE
                    .iter()
                    .flat_map(|&g| self.model.store.ids_in(g))
                    .flat_map(|p| grads.get(p).values().to_vec())
                    .filter(|x| *x != 0.0)
                    .map(f64::abs)
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// First draw at or after `seed * 1000` whose every nonzero gradient
    /// component is resolvable.
    fn conditioned(seed: u64) -> Self {
        (seed * 1000..seed * 1000 + 1000)
            .map(Self::draw)
            .find(|c| c.smallest_gradient() >= RESOLVABLE)
            .expect("a resolvable case within 1000 draws")
    }
}

#[test]
fn every_loss_through_the_model() {
    for seed in 0..SEEDS {
        let case = Case::conditioned(seed);
        let mut model = case.model.clone();
        for (name, loss) in case.losses() {
            let err = model.gradient_check(&TRAINABLE, EPS, |f| loss(f)).unwrap();
            assert!(err < TOL, "{name} loss, seed {seed}: relative error {err}");
        }
    }
}
