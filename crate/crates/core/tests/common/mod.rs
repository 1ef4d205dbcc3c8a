//! Random small instances for finite-difference gradient checks. Each
//! family returns the worst relative error over its instances.

#![allow(dead_code)]

use std::sync::Arc;

use onconet::engine::{gradcheck, Activation, GradCheck, Matrix, SeededRng, SparseMask, Tape, Var, FD_STEP};
use onconet::gnn::{
    build_gnn, record_gat, record_gcn, record_meta, EdgeIndex, GatConfig, GatHeadVars, GcnConfig,
    GnnConfig, MetaConfig, MlpVars,
};
use onconet::graph::{build_graph, normalized_adjacency, GeneGraph, GraphConfig, Interaction, InteractionTable};
use onconet::model::Model;
use onconet::pathway::build_masks;
use onconet::pnet::{build_pnet, PNetConfig};
use onconet::synth::{generate_hierarchy, SynthConfig};
use onconet::Result;

/// Coordinates sampled per input matrix.
const COORDS: usize = 12;

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut SeededRng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.uniform_range(-scale, scale)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn random_mask(rows: usize, cols: usize, density: f64, rng: &mut SeededRng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.bernoulli(density) as u8 as f64).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Values bounded away from zero so kinked activations stay smooth under the step.
fn off_kink(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| {
            let m = rng.uniform_range(1e-3, 2.0);
            if rng.bernoulli(0.5) { m } else { -m }
        })
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn random_graph(rng: &mut SeededRng) -> GeneGraph {
    let n = rng.int_inclusive(3, 7);
    let genes: Vec<String> = (0..n).map(|i| format!("g{i}")).collect();
    let mut records = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.bernoulli(0.5) {
                records.push(Interaction {
                    gene_a: genes[a].clone(),
                    gene_b: genes[b].clone(),
                    strength: 0.9,
                });
            }
        }
    }
    build_graph(&InteractionTable { records }, &GraphConfig::default(), &genes).unwrap()
}

/// Reduces a matrix to a scalar through a fixed random projection so every
/// output entry receives a distinct upstream gradient.
fn project(t: &mut Tape, out: Var, rng_seed: u64) -> Result<Var> {
    let v = t.value(out).clone();
    let mut rng = SeededRng::new(rng_seed);
    let r = t.leaf(random_matrix(v.cols(), 1, 1.0, &mut rng));
    let col = t.matmul(out, r)?;
    let col = t.activation(col, Activation::Tanh);
    t.block_mean(col, 1)
}

const EMPTY: GradCheck = GradCheck {
    max_rel_error: 0.0,
    coordinates: 0,
    kinks: 0,
};

pub fn merge(a: GradCheck, b: GradCheck) -> GradCheck {
    GradCheck {
        max_rel_error: a.max_rel_error.max(b.max_rel_error),
        coordinates: a.coordinates + b.coordinates,
        kinks: a.kinks + b.kinks,
    }
}

/// Share of sampled coordinates skipped at kinks; large values would mean
/// the comparison silently checked little.
pub fn kink_share(r: &GradCheck) -> f64 {
    r.kinks as f64 / (r.kinks + r.coordinates).max(1) as f64
}

fn worst(instances: usize, seed: u64, mut case: impl FnMut(&mut SeededRng) -> Result<GradCheck>) -> GradCheck {
    let rng = SeededRng::new(seed);
    (0..instances)
        .map(|i| case(&mut rng.derive(i as u64)).unwrap())
        .fold(EMPTY, merge)
}

pub fn masked_linear_family(instances: usize, seed: u64) -> GradCheck {
    worst(instances, seed, |rng| {
        let (b, m, n) = (rng.int_inclusive(1, 4), rng.int_inclusive(2, 6), rng.int_inclusive(1, 5));
        let mask = Arc::new(SparseMask::new(random_mask(m, n, 0.5, rng))?);
        let x = random_matrix(b, m, 1.0, rng);
        let w = random_matrix(m, n, 1.0, rng);
        let bias = random_matrix(1, n, 1.0, rng);
        let values = random_matrix(1, mask.count_ones().max(1), 1.0, rng);
        let salt = rng.below(1 << 30) as u64;
        let dense = gradcheck(
            &[x.clone(), w, bias.clone()],
            |t, v| {
                let y = t.masked_matmul(v[0], v[1], &mask)?;
                let y = t.add_bias(y, v[2])?;
                project(t, y, salt)
            },
            FD_STEP,
            COORDS,
            rng,
        )?;
        if mask.count_ones() == 0 {
            return Ok(dense);
        }
        let sparse = gradcheck(
            &[x, values, bias],
            |t, v| {
                let y = t.sparse_linear(v[0], v[1], &mask)?;
                let y = t.add_bias(y, v[2])?;
                project(t, y, salt)
            },
            FD_STEP,
            COORDS,
            rng,
        )?;
        Ok(merge(dense, sparse))
    })
}

pub const ACTIVATIONS: [Activation; 4] = [
    Activation::Tanh,
    Activation::Relu,
    Activation::Sigmoid,
    Activation::LeakyRelu { slope: 0.2 },
];

pub fn activation_family(kind: Activation, instances: usize, seed: u64) -> GradCheck {
    worst(instances, seed, |rng| {
        let x = off_kink(rng.int_inclusive(1, 4), rng.int_inclusive(1, 4), rng);
        let salt = rng.below(1 << 30) as u64;
        gradcheck(
            &[x],
            |t, v| {
                let y = t.activation(v[0], kind);
                project(t, y, salt)
            },
            FD_STEP,
            COORDS,
            rng,
        )
    })
}

pub fn bce_family(instances: usize, seed: u64) -> GradCheck {
    worst(instances, seed, |rng| {
        let n = rng.int_inclusive(1, 8);
        let z = random_matrix(n, 1, 3.0, rng);
        let y: Arc<[f64]> = (0..n).map(|_| rng.bernoulli(0.5) as u8 as f64).collect();
        gradcheck(
            &[z],
            |t, v| {
                let p = t.activation(v[0], Activation::Sigmoid);
                t.bce(p, &y)
            },
            FD_STEP,
            COORDS,
            rng,
        )
    })
}

pub fn gcn_layer_family(instances: usize, seed: u64) -> GradCheck {
    worst(instances, seed, |rng| {
        let g = random_graph(rng);
        let blocks = rng.int_inclusive(1, 3);
        let adj = Arc::new(normalized_adjacency(&g));
        let (d, d2) = (rng.int_inclusive(1, 4), rng.int_inclusive(1, 4));
        let h = random_matrix(g.n_nodes() * blocks, d, 1.0, rng);
        let w = random_matrix(d, d2, 1.0, rng);
        let salt = rng.below(1 << 30) as u64;
        gradcheck(
            &[h, w],
            |t, v| {
                let out = record_gcn(t, v[0], &adj, blocks, v[1])?;
                project(t, out, salt)
            },
            FD_STEP,
            COORDS,
            rng,
        )
    })
}

pub fn gat_layer_family(instances: usize, seed: u64) -> GradCheck {
    worst(instances, seed, |rng| {
        let g = random_graph(rng);
        let blocks = rng.int_inclusive(1, 2);
        let edges = EdgeIndex::new(&g, blocks, true);
        let (d, d2, heads) = (rng.int_inclusive(1, 3), rng.int_inclusive(1, 3), rng.int_inclusive(1, 3));
        let mut inputs = vec![random_matrix(g.n_nodes() * blocks, d, 1.0, rng)];
        for _ in 0..heads {
            inputs.push(random_matrix(d, d2, 1.0, rng));
            inputs.push(random_matrix(d2, 1, 1.0, rng));
            inputs.push(random_matrix(d2, 1, 1.0, rng));
        }
        let salt = rng.below(1 << 30) as u64;
        gradcheck(
            &inputs,
            |t, v| {
                let hv: Vec<GatHeadVars> = v[1..]
                    .chunks(3)
                    .map(|c| GatHeadVars {
                        weight: c[0],
                        att_src: c[1],
                        att_dst: c[2],
                    })
                    .collect();
                let (out, _) = record_gat(t, v[0], &edges, &hv)?;
                project(t, out, salt)
            },
            FD_STEP,
            COORDS,
            rng,
        )
    })
}

fn mlp_inputs(d_in: usize, hidden: usize, d_out: usize, rng: &mut SeededRng) -> Vec<Matrix> {
    vec![
        random_matrix(d_in, hidden, 1.0, rng),
        random_matrix(1, hidden, 0.5, rng),
        random_matrix(hidden, d_out, 1.0, rng),
        random_matrix(1, d_out, 0.5, rng),
    ]
}

fn mlp_vars(v: &[Var]) -> MlpVars {
    MlpVars {
        w1: v[0],
        b1: v[1],
        w2: v[2],
        b2: v[3],
    }
}

pub fn meta_layer_family(instances: usize, seed: u64) -> GradCheck {
    worst(instances, seed, |rng| {
        let g = random_graph(rng);
        let blocks = rng.int_inclusive(1, 2);
        let edges = EdgeIndex::new(&g, blocks, false);
        let (d, de, hid, d2) = (
            rng.int_inclusive(1, 3),
            rng.int_inclusive(1, 2),
            rng.int_inclusive(1, 4),
            rng.int_inclusive(1, 3),
        );
        let mut inputs = vec![
            random_matrix(g.n_nodes() * blocks, d, 1.0, rng),
            random_matrix(edges.len().max(1), de, 1.0, rng),
        ];
        if edges.len() == 0 {
            return Ok(EMPTY);
        }
        inputs.extend(mlp_inputs(2 * d + de, hid, de, rng));
        inputs.extend(mlp_inputs(d + de, hid, d2, rng));
        let salt = rng.below(1 << 30) as u64;
        gradcheck(
            &inputs,
            |t, v| {
                let (h, e) = record_meta(t, v[0], v[1], &edges, mlp_vars(&v[2..6]), mlp_vars(&v[6..10]))?;
                let a = project(t, h, salt)?;
                let b = project(t, e, salt + 1)?;
                t.add(a, b)
            },
            FD_STEP,
            COORDS,
            rng,
        )
    })
}

fn model_check(model: &dyn Model, x: &Matrix, y: &Arc<[f64]>, step: f64, rng: &mut SeededRng) -> Result<GradCheck> {
    let params: Vec<Matrix> = model.params().into_iter().cloned().collect();
    gradcheck(
        &params,
        |t, v| {
            let p = model.forward(t, v, x)?;
            t.bce(p, y)
        },
        step,
        COORDS,
        rng,
    )
}

fn binary_batch(rows: usize, cols: usize, rng: &mut SeededRng) -> (Matrix, Arc<[f64]>) {
    let x = random_mask(rows, cols, 0.3, rng);
    let y: Arc<[f64]> = (0..rows).map(|_| rng.bernoulli(0.5) as u8 as f64).collect();
    (x, y)
}

pub fn pnet_family(instances: usize, seed: u64) -> GradCheck {
    worst(instances, seed, |rng| {
        let config = SynthConfig {
            n_genes: rng.int_inclusive(4, 10),
            branching: 2,
            depth: 3,
            drivers: 1,
            ..SynthConfig::default()
        };
        let hierarchy = generate_hierarchy(&config, rng)?.to_hierarchy()?;
        let layers = rng.int_inclusive(2, 3);
        let channels = rng.int_inclusive(1, 3);
        let masks = build_masks(&hierarchy, layers, channels)?;
        let mut pc = PNetConfig::new(layers, channels, rng.below(1000) as u64);
        pc.activation = [Activation::Tanh, Activation::Sigmoid][rng.below(2)];
        let mut model = build_pnet(&masks, &pc, rng)?;
        // Nonzero biases so every bias coordinate is exercised away from its initial value.
        for p in model.params_mut() {
            for v in p.data_mut() {
                *v += rng.uniform_range(-0.2, 0.2);
            }
        }
        let (x, y) = binary_batch(rng.int_inclusive(1, 5), masks.n_inputs(), rng);
        model_check(&model, &x, &y, FD_STEP, rng)
    })
}

pub fn gnn_family(arch: &str, instances: usize, seed: u64) -> GradCheck {
    worst(instances, seed, |rng| gnn_case(arch, FD_STEP, rng))
}

pub fn gnn_case(arch: &str, step: f64, rng: &mut SeededRng) -> Result<GradCheck> {
    {
        let g = random_graph(rng);
        let channels = rng.int_inclusive(1, 3);
        let lr = 1e-3;
        let config = match arch {
            "gcn" => GnnConfig::Gcn(GcnConfig { steps: 2, hidden: 32, head: 32, learning_rate: lr }),
            "gat" => GnnConfig::Gat(GatConfig {
                steps: 2,
                hidden: 32,
                head: 32,
                heads: rng.int_inclusive(1, 2),
                learning_rate: lr,
            }),
            _ => GnnConfig::Meta(MetaConfig { steps: 2, hidden: 32, learning_rate: lr }),
        };
        let mut model = build_gnn(&config, &g, channels, rng.below(1000) as u64)?;
        for p in model.params_mut() {
            for v in p.data_mut() {
                *v += rng.uniform_range(-0.05, 0.05);
            }
        }
        let (x, y) = binary_batch(rng.int_inclusive(1, 3), g.n_nodes() * channels, rng);
        model_check(&model, &x, &y, step, rng)
    }
}

/// Brute-force pairwise AUC: ties between a positive and a negative count one half.
pub fn brute_auc(scores: &[f64], labels: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1.0 && lj == 0.0 {
                pairs += 1;
                total += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    total / pairs as f64
}

/// Brute-force two-sample KS statistic: both ECDFs evaluated at every observed value.
pub fn brute_ks(a: &[f64], b: &[f64]) -> f64 {
    let ecdf = |s: &[f64], t: f64| s.iter().filter(|&&v| v <= t).count() as f64 / s.len() as f64;
    a.iter()
        .chain(b)
        .map(|&t| (ecdf(a, t) - ecdf(b, t)).abs())
        .fold(0.0, f64::max)
}

/// Values on a coarse grid so ties are common.
pub fn tied_values(n: usize, rng: &mut SeededRng) -> Vec<f64> {
    (0..n).map(|_| rng.below(12) as f64 / 11.0).collect()
}

pub fn auc_oracle_family(instances: usize, seed: u64) -> f64 {
    let rng = SeededRng::new(seed);
    (0..instances)
        .map(|i| {
            let mut rng = rng.derive(i as u64);
            let n = rng.int_inclusive(2, 50);
            let scores = tied_values(n, &mut rng);
            let mut labels: Vec<f64> = (0..n).map(|_| rng.bernoulli(0.5) as u8 as f64).collect();
            labels[0] = 1.0;
            labels[1] = 0.0;
            let auc = onconet::train::roc_auc(&scores, &labels).unwrap();
            (auc - brute_auc(&scores, &labels)).abs()
        })
        .fold(0.0, f64::max)
}

pub fn ks_oracle_family(instances: usize, seed: u64) -> f64 {
    let rng = SeededRng::new(seed);
    (0..instances)
        .map(|i| {
            let mut rng = rng.derive(i as u64);
            let a = tied_values(rng.int_inclusive(2, 40), &mut rng);
            let b = tied_values(rng.int_inclusive(2, 40), &mut rng);
            let d = onconet::agreement::ks_two_sample(&a, &b).unwrap().statistic;
            (d - brute_ks(&a, &b)).abs()
        })
        .fold(0.0, f64::max)
}

/// Hand-computed Benjamini–Hochberg fixtures `(p, q)`.
pub fn bh_fixtures() -> Vec<(Vec<f64>, Vec<f64>)> {
    vec![
        (vec![0.01, 0.02, 0.03, 0.04], vec![0.04, 0.04, 0.04, 0.04]),
        // ranks 1..4 give 0.04, 0.06, 0.04·4/3, 0.2; the step-up minimum pulls 0.06 down
        (vec![0.01, 0.04, 0.03, 0.2], vec![0.04, 0.04 * 4.0 / 3.0, 0.04 * 4.0 / 3.0, 0.2]),
        (vec![0.5], vec![0.5]),
        (vec![0.9, 0.8], vec![0.9, 0.9]),
        (vec![0.02, 0.02], vec![0.02, 0.02]),
        (vec![], vec![]),
    ]
}

pub fn permuted_masks_preserve(instances: usize, seed: u64) -> bool {
    let rng = SeededRng::new(seed);
    (0..instances).all(|i| {
        let mut rng = rng.derive(i as u64);
        let (r, c) = (rng.int_inclusive(1, 12), rng.int_inclusive(1, 12));
        let m = random_mask(r, c, rng.uniform(), &mut rng);
        let p = onconet::pathway::permute_mask(&m, &mut rng);
        p.shape() == m.shape()
            && p.sum() == m.sum()
            && p.data().iter().all(|&v| v == 0.0 || v == 1.0)
    })
}

/// Largest change in output probability when nodes, features and edges are
/// relabeled together.
pub fn gnn_permutation_family(arch: &str, graphs: usize, seed: u64) -> f64 {
    let rng = SeededRng::new(seed);
    (0..graphs)
        .map(|i| {
            let mut rng = rng.derive(i as u64);
            let g = random_graph(&mut rng);
            let channels = rng.int_inclusive(1, 3);
            let config = match arch {
                "gcn" => GnnConfig::Gcn(GcnConfig { steps: 2, hidden: 32, head: 32, learning_rate: 1e-3 }),
                "gat" => GnnConfig::Gat(GatConfig { steps: 3, hidden: 32, head: 32, heads: 2, learning_rate: 1e-3 }),
                _ => GnnConfig::Meta(MetaConfig { steps: 2, hidden: 32, learning_rate: 1e-3 }),
            };
            let mut model = build_gnn(&config, &g, channels, i as u64).unwrap();
            for p in model.params_mut() {
                for v in p.data_mut() {
                    *v += rng.uniform_range(-0.1, 0.1);
                }
            }
            let x = random_matrix(g.n_nodes(), channels, 1.0, &mut rng);
            let mut order: Vec<usize> = (0..g.n_nodes()).collect();
            rng.shuffle(&mut order);
            let g2 = g.reorder(&order).unwrap();
            let rows: Vec<Vec<f64>> = order.iter().map(|&o| x.row(o).to_vec()).collect();
            let x2 = Matrix::from_rows(&rows);
            let a = onconet::gnn::gnn_forward(&model, &g, &x).unwrap();
            let b = onconet::gnn::gnn_forward(&model, &g2, &x2).unwrap();
            (a - b).abs()
        })
        .fold(0.0, f64::max)
}

/// Trains a random P-NET for `steps` Adam updates and returns the largest
/// absolute dense weight and dense gradient found at masked-out positions.
pub fn masked_positions_after_training(steps: usize, seed: u64) -> (f64, f64, usize) {
    let mut rng = SeededRng::new(seed);
    let config = SynthConfig {
        n_genes: 30,
        branching: 2,
        depth: 4,
        drivers: 1,
        ..SynthConfig::default()
    };
    let hierarchy = generate_hierarchy(&config, &mut rng).unwrap().to_hierarchy().unwrap();
    let masks = build_masks(&hierarchy, 3, 2).unwrap();
    let mut model = build_pnet(&masks, &PNetConfig::new(3, 2, seed), &mut rng).unwrap();
    let batch = 10;
    let (x, _) = binary_batch(steps * batch, masks.n_inputs(), &mut rng);
    let y: Vec<f64> = (0..x.rows()).map(|_| rng.bernoulli(0.5) as u8 as f64).collect();
    let tc = onconet::train::TrainConfig {
        batch_size: batch,
        epochs: 1,
        learning_rate: 1e-2,
        seed,
    };
    onconet::train::train_on(&mut model, &x, &y, &tc).unwrap();
    let (_, grads) = model.dense_loss_and_grads(&x, &y).unwrap();
    let (mut w_max, mut g_max, mut zeros) = (0.0f64, 0.0f64, 0usize);
    for ((w, g), mask) in model.dense_weights().iter().zip(&grads).zip(model.layer_masks()) {
        for r in 0..w.rows() {
            for c in 0..w.cols() {
                if !mask.is_set(r, c) {
                    zeros += 1;
                    w_max = w_max.max(w.get(r, c).abs());
                    g_max = g_max.max(g.get(r, c).abs());
                }
            }
        }
    }
    (w_max, g_max, zeros)
}
