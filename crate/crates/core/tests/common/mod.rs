#![allow(dead_code)]

use errsup::autodiff::{Graph, ParamStore, Var};

/// Five-point central finite-difference check of every parameter entry.
/// Returns the worst `|a - n| / max(|a|, |n|, floor)`.
pub fn fd_max_rel_error(store: &ParamStore, f: impl Fn(&Graph) -> Var) -> f64 {
    let h = 1e-3;
    let floor = 1e-6;
    let g = Graph::new(store);
    let loss = f(&g);
    let grads = g.backward(loss).unwrap().into_params();
    let eval = |s: &ParamStore| {
        let g = Graph::new(s);
        let l = f(&g);
        g.scalar_value(l)
    };
    let mut s = store.clone();
    let mut worst: f64 = 0.0;
    let ids: Vec<_> = store.iter().map(|(id, p)| (id, p.value.len())).collect();
    for (id, n) in ids {
        for i in 0..n {
            let orig = s.value(id).data()[i];
            let mut at = |delta: f64| {
                s.value_mut(id).data_mut()[i] = orig + delta;
                eval(&s)
            };
            let num = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
            s.value_mut(id).data_mut()[i] = orig;
            let ana = grads.get(id).map(|t| t.data()[i]).unwrap_or(0.0);
            let rel = (ana - num).abs() / ana.abs().max(num.abs()).max(floor);
            worst = worst.max(rel);
        }
    }
    worst
}

fn count<T: PartialEq>(x: &[T], gram: &[T]) -> usize {
    if gram.is_empty() || x.len() < gram.len() {
        return 0;
    }
    (0..=x.len() - gram.len()).filter(|&i| &x[i..i + gram.len()] == gram).count()
}

fn distinct<T: PartialEq + Clone>(x: &[T], n: usize) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = Vec::new();
    if x.len() >= n {
        for i in 0..=x.len() - n {
            let g = x[i..i + n].to_vec();
            if !out.contains(&g) {
                out.push(g);
            }
        }
    }
    out
}

fn windows(len: usize, n: usize) -> usize {
    (len + 1).saturating_sub(n)
}

/// Number of adjacent `w w` pairs in `x`.
fn doubled<T: PartialEq>(x: &[T], w: &T) -> usize {
    (1..x.len()).filter(|&i| x[i] == *w && x[i - 1] == *w).count()
}

fn doubled_excess<T: PartialEq + Clone>(r: &[T], t: &[T]) -> usize {
    let words: Vec<Vec<T>> = distinct(t, 1);
    words
        .iter()
        .map(|w| doubled(t, &w[0]).saturating_sub(doubled(r, &w[0])))
        .sum()
}

pub fn oracle_erep(r: &[u32], t: &[u32], lambda: [f64; 4]) -> f64 {
    let mut sigma = lambda[0] * doubled_excess(r, t) as f64;
    let mut denom = (1..t.len()).filter(|&i| t[i] == t[i - 1]).count();
    for n in 2..=4 {
        for s in distinct(t, n) {
            let ct = count(t, &s);
            if ct >= 2 {
                sigma += lambda[n - 1] * ct.saturating_sub(count(r, &s)) as f64;
            }
        }
        denom += windows(t.len(), n);
    }
    if denom == 0 {
        0.0
    } else {
        100.0 * sigma / denom as f64
    }
}

pub fn oracle_rep(r: &[u32], t: &[u32], n: usize, lambda: [f64; 4]) -> f64 {
    let mut sigma = lambda[0] * doubled_excess(r, t) as f64;
    for s in distinct(r, n) {
        let ct = count(t, &s);
        if ct >= 2 {
            sigma += lambda[n - 1] * ct.saturating_sub(count(r, &s)) as f64;
        }
    }
    let denom = (1..r.len()).filter(|&i| r[i] == r[i - 1]).count() + windows(r.len(), n);
    if denom == 0 {
        0.0
    } else {
        100.0 * sigma / denom as f64
    }
}

fn clipped(r: &[u32], t: &[u32], n: usize) -> usize {
    distinct(t, n).iter().map(|s| count(t, s).min(count(r, s))).sum()
}

pub fn oracle_gleu(r: &[u32], t: &[u32]) -> f64 {
    let m: usize = (1..=4).map(|n| clipped(r, t, n)).sum();
    let ht: usize = (1..=4).map(|n| windows(t.len(), n)).sum();
    let rt: usize = (1..=4).map(|n| windows(r.len(), n)).sum();
    if ht == 0 || rt == 0 {
        return 0.0;
    }
    100.0 * (m as f64 / ht as f64).min(m as f64 / rt as f64)
}

pub fn oracle_bleu(refs: &[Vec<u32>], hyps: &[Vec<u32>]) -> (f64, f64) {
    let c: usize = hyps.iter().map(Vec::len).sum();
    let rl: usize = refs.iter().map(Vec::len).sum();
    let bp = if c == 0 {
        0.0
    } else if c > rl {
        1.0
    } else {
        (1.0 - rl as f64 / c as f64).exp()
    };
    let mut logs = Vec::new();
    for n in 1..=4 {
        let m: usize = refs.iter().zip(hyps).map(|(r, t)| clipped(r, t, n)).sum();
        let tot: usize = hyps.iter().map(|t| windows(t.len(), n)).sum();
        if tot == 0 {
            continue;
        }
        if m == 0 {
            return (0.0, bp);
        }
        logs.push((m as f64 / tot as f64).ln());
    }
    if logs.is_empty() {
        return (0.0, bp);
    }
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    (100.0 * bp * mean.exp(), bp)
}

pub fn oracle_rouge_l(r: &[u32], t: &[u32], beta: f64) -> f64 {
    let (n, m) = (r.len(), t.len());
    let mut table = vec![vec![0usize; m + 1]; n + 1];
    for i in 1..=n {
        for j in 1..=m {
            table[i][j] = if r[i - 1] == t[j - 1] {
                table[i - 1][j - 1] + 1
            } else {
                table[i - 1][j].max(table[i][j - 1])
            };
        }
    }
    let l = table[n][m] as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / m as f64;
    let rec = l / n as f64;
    100.0 * (1.0 + beta * beta) * p * rec / (rec + beta * beta * p)
}

/// Whether `sub` can be obtained from `full` by deleting elements.
pub fn is_subsequence<T: PartialEq>(sub: &[T], full: &[T]) -> bool {
    let mut it = full.iter();
    sub.iter().all(|x| it.any(|y| y == x))
}

pub mod grad {
    use super::fd_max_rel_error;
    use errsup::autodiff::{Graph, Init, ParamId, ParamStore, Tensor, Var};
    use errsup::corpus::TokenId;
    use errsup::models::{Discriminator, DiscriminatorConfig, LstmCell, Seq2Seq, Seq2SeqConfig};
    use errsup::training::{discriminator_loss, mixed_loss_var, mle_loss, rl_loss};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Reduces any node to a scalar with fixed random weights.
    fn project(g: &Graph, v: Var, seed: u64) -> Var {
        let shape = g.shape(v);
        let n: usize = shape.iter().product();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = g.constant(Tensor::new(shape, w).unwrap());
        g.sum(g.mul(v, c).unwrap())
    }

    struct Fixture {
        store: ParamStore,
        rng: ChaCha8Rng,
    }

    impl Fixture {
        fn new(seed: u64) -> Self {
            Fixture {
                store: ParamStore::new(),
                rng: ChaCha8Rng::seed_from_u64(seed),
            }
        }

        fn dim(&mut self) -> usize {
            self.rng.gen_range(2..=5)
        }

        fn p(&mut self, shape: &[usize]) -> ParamId {
            let name = format!("p{}", self.store.len());
            self.store.add(&name, shape, Init::Uniform(1.0), &mut self.rng)
        }

        /// Distinct values at least 0.14 apart and away from zero, so a
        /// finite-difference stencil never crosses a kink.
        fn spread(&mut self, id: ParamId) {
            let n = self.store.value(id).len();
            let mut vals: Vec<f64> = (0..n)
                .map(|i| {
                    let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                    sign * (0.1 + 0.2 * (i / 2) as f64) + self.rng.gen_range(-0.03..0.03)
                })
                .collect();
            vals.shuffle(&mut self.rng);
            self.store.value_mut(id).data_mut().copy_from_slice(&vals);
        }
    }

    fn unary_case(seed: u64, f: impl Fn(&Graph, Var) -> Var) -> f64 {
        let mut fx = Fixture::new(seed);
        let n = fx.dim();
        let x = fx.p(&[n]);
        fx.spread(x);
        fd_max_rel_error(&fx.store, |g| project(g, f(g, g.param(x)), seed))
    }

    /// Worst finite-difference error for each graph operation on random
    /// small shapes.
    pub fn op_errors(seed: u64) -> Vec<(&'static str, f64)> {
        let mut out = Vec::new();
        let s = seed;

        let mut fx = Fixture::new(s);
        let (m, k, n) = (fx.dim(), fx.dim(), fx.dim());
        let (a, b, x, y) = (fx.p(&[m, k]), fx.p(&[k, n]), fx.p(&[k]), fx.p(&[m]));
        out.push(("matmul", fd_max_rel_error(&fx.store, |g| {
            let mm = g.matmul(g.param(a), g.param(b)).unwrap();
            let mv = g.matmul(g.param(a), g.param(x)).unwrap();
            let vm = g.matmul(g.param(y), g.param(a)).unwrap();
            let parts = [project(g, mm, s), project(g, mv, s + 1), project(g, vm, s + 2)];
            g.add_n(&parts).unwrap()
        })));

        let mut fx = Fixture::new(s + 10);
        let (m, n) = (fx.dim(), fx.dim());
        let (a, b, v) = (fx.p(&[m, n]), fx.p(&[m, n]), fx.p(&[n]));
        fx.spread(a);
        out.push(("add", fd_max_rel_error(&fx.store, |g| project(g, g.add(g.param(a), g.param(b)).unwrap(), s))));
        out.push(("sub", fd_max_rel_error(&fx.store, |g| project(g, g.sub(g.param(a), g.param(b)).unwrap(), s))));
        out.push(("mul", fd_max_rel_error(&fx.store, |g| project(g, g.mul(g.param(a), g.param(b)).unwrap(), s))));
        out.push(("scale", fd_max_rel_error(&fx.store, |g| project(g, g.scale(g.param(a), -1.7), s))));
        out.push(("add_row", fd_max_rel_error(&fx.store, |g| {
            project(g, g.add_row(g.param(a), g.param(v)).unwrap(), s)
        })));
        out.push(("stack", fd_max_rel_error(&fx.store, |g| {
            let xs = [g.param(v), g.tanh(g.param(v)), g.param(v)];
            project(g, g.stack(&xs).unwrap(), s)
        })));
        out.push(("max_over_time", fd_max_rel_error(&fx.store, |g| {
            project(g, g.max_over_time(g.param(a)).unwrap(), s)
        })));
        out.push(("sum", fd_max_rel_error(&fx.store, |g| g.sum(g.tanh(g.param(a))))));
        out.push(("mean", fd_max_rel_error(&fx.store, |g| g.mean(g.tanh(g.param(a))))));
        out.push(("add_n", fd_max_rel_error(&fx.store, |g| {
            let xs = [g.param(a), g.param(b), g.tanh(g.param(a))];
            project(g, g.add_n(&xs).unwrap(), s)
        })));
        out.push(("embedding", fd_max_rel_error(&fx.store, |g| {
            let rows = [g.embedding(g.param(a), 0).unwrap(), g.embedding(g.param(a), m - 1).unwrap()];
            project(g, g.concat(&rows).unwrap(), s)
        })));

        out.push(("tanh", unary_case(s + 20, |g, x| g.tanh(x))));
        out.push(("sigmoid", unary_case(s + 21, |g, x| g.sigmoid(x))));
        out.push(("relu", unary_case(s + 22, |g, x| g.relu(x))));
        out.push(("log_sigmoid", unary_case(s + 23, |g, x| g.log_sigmoid(g.scale(x, 8.0)))));
        out.push(("softmax", unary_case(s + 24, |g, x| g.softmax(x).unwrap())));
        out.push(("log_softmax", unary_case(s + 25, |g, x| g.log_softmax(x).unwrap())));
        out.push(("slice", unary_case(s + 26, |g, x| {
            let n = g.shape(x)[0];
            g.slice(g.tanh(x), 1, n - 1).unwrap()
        })));
        out.push(("pick", unary_case(s + 27, |g, x| g.pick(g.softmax(x).unwrap(), 1).unwrap())));

        let mut fx = Fixture::new(s + 30);
        let (n, n2) = (fx.dim(), fx.dim());
        let (u, w) = (fx.p(&[n]), fx.p(&[n2]));
        out.push(("concat", fd_max_rel_error(&fx.store, |g| {
            let xs = [g.param(u), g.sigmoid(g.param(w)), g.param(u)];
            project(g, g.concat(&xs).unwrap(), s)
        })));
        out.push(("dot", fd_max_rel_error(&fx.store, |g| {
            let t = g.tanh(g.param(u));
            g.dot(g.param(u), t).unwrap()
        })));

        let mut fx = Fixture::new(s + 40);
        let (input, hidden) = (fx.dim(), fx.dim());
        let cell = LstmCell::new(&mut fx.store, "cell", input, hidden, Init::Uniform(0.5), &mut fx.rng);
        let (x0, x1, h0, c0) = (fx.p(&[input]), fx.p(&[input]), fx.p(&[hidden]), fx.p(&[hidden]));
        out.push(("lstm_step", fd_max_rel_error(&fx.store, |g| {
            let (h, c) = cell.step(g, g.param(x0), g.param(h0), g.param(c0)).unwrap();
            let (h, c) = cell.step(g, g.param(x1), h, c).unwrap();
            let parts = [project(g, h, s), project(g, c, s + 1)];
            g.add_n(&parts).unwrap()
        })));
        out
    }

    fn random_sentence(rng: &mut ChaCha8Rng, vocab: usize, max_len: usize) -> Vec<TokenId> {
        let n = rng.gen_range(1..=max_len);
        (0..n).map(|_| rng.gen_range(4..vocab) as TokenId).collect()
    }

    fn tiny_seq2seq(seed: u64) -> (Seq2Seq, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = Seq2SeqConfig::new(9, 8, rng.gen_range(3..=4));
        (Seq2Seq::new(cfg, Init::Uniform(0.5), &mut rng), rng)
    }

    /// Label-smoothed MLE loss through the full attentional model.
    pub fn mle_error(seed: u64) -> f64 {
        let (model, mut rng) = tiny_seq2seq(seed);
        let src = random_sentence(&mut rng, 9, 4);
        let tgt = random_sentence(&mut rng, 8, 4);
        fd_max_rel_error(&model.params, |g| mle_loss(g, &model, &src, &tgt, 0.1).unwrap())
    }

    /// REINFORCE surrogate on a sampled trajectory, mixed with MLE. The
    /// sample is redrawn with the same seed on every perturbed copy, and
    /// must come out identical.
    pub fn rl_error(seed: u64) -> f64 {
        let (model, mut rng) = tiny_seq2seq(seed);
        let src = random_sentence(&mut rng, 9, 4);
        let draw = seed.wrapping_mul(31).wrapping_add(7);
        let reference = model
            .sample_sequence(&src, 6, &mut ChaCha8Rng::seed_from_u64(draw))
            .unwrap()
            .tokens;
        let rewards: Vec<f64> = (0..reference.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let baselines: Vec<f64> = (0..reference.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let gold = random_sentence(&mut rng, 8, 3);
        let surrogate = fd_max_rel_error(&model.params, |g| {
            let traj = model.sample_in(g, &src, 6, &mut ChaCha8Rng::seed_from_u64(draw)).unwrap();
            assert_eq!(traj.tokens, reference, "perturbation changed the sample");
            rl_loss(g, &traj.log_probs, &rewards, &baselines).unwrap()
        });
        let mixed = fd_max_rel_error(&model.params, |g| {
            let traj = model.sample_in(g, &src, 6, &mut ChaCha8Rng::seed_from_u64(draw)).unwrap();
            assert_eq!(traj.tokens, reference, "perturbation changed the sample");
            let rl = rl_loss(g, &traj.log_probs, &rewards, &baselines).unwrap();
            let mle = mle_loss(g, &model, &src, &gold, 0.1).unwrap();
            mixed_loss_var(g, mle, rl, 0.3).unwrap()
        });
        surrogate.max(mixed)
    }

    /// Binary cross-entropy of the discriminator on a positive and a
    /// negative pair.
    pub fn disc_error(seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = DiscriminatorConfig::new(9, 8, 4);
        let d = Discriminator::new(cfg, Init::Uniform(0.5), &mut rng);
        let src = random_sentence(&mut rng, 9, 4);
        let pos = random_sentence(&mut rng, 8, 4);
        let neg = random_sentence(&mut rng, 8, 5);
        fd_max_rel_error(&d.params, |g| discriminator_loss(g, &d, &src, &pos, &neg).unwrap())
    }
}

