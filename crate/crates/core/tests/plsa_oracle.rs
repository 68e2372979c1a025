use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regionplsa::plsa::{
    em_step, fold_in_counts, log_likelihood, random_init, train, train_from, PlsaConfig, PlsaModel, TermMatrix,
};

/// Textbook EM with the full posterior P(z | r, f) materialized.
struct Oracle {
    n: Vec<Vec<f64>>,
    k: usize,
}

impl Oracle {
    fn step(&self, pzr: &[Vec<f64>], pfz: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let (rows, cols) = (self.n.len(), self.n[0].len());
        let mut post = vec![vec![vec![0.0; self.k]; cols]; rows];
        for i in 0..rows {
            for j in 0..cols {
                let z: f64 = (0..self.k).map(|t| pzr[i][t] * pfz[t][j]).sum();
                for t in 0..self.k {
                    post[i][j][t] = if z > 0.0 { pzr[i][t] * pfz[t][j] / z } else { 0.0 };
                }
            }
        }
        let mut new_pfz = vec![vec![0.0; cols]; self.k];
        for t in 0..self.k {
            let denom: f64 =
                (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).map(|(i, j)| self.n[i][j] * post[i][j][t]).sum();
            for j in 0..cols {
                let num: f64 = (0..rows).map(|i| self.n[i][j] * post[i][j][t]).sum();
                new_pfz[t][j] = num / denom;
            }
        }
        let mut new_pzr = vec![vec![0.0; self.k]; rows];
        for i in 0..rows {
            let ni: f64 = self.n[i].iter().sum();
            for t in 0..self.k {
                new_pzr[i][t] = (0..cols).map(|j| self.n[i][j] * post[i][j][t]).sum::<f64>() / ni;
            }
        }
        (new_pzr, new_pfz)
    }

    fn loglik(&self, pzr: &[Vec<f64>], pfz: &[Vec<f64>]) -> f64 {
        let total: f64 = self.n.iter().flatten().sum();
        let mut l = 0.0;
        for (i, row) in self.n.iter().enumerate() {
            let pr = row.iter().sum::<f64>() / total;
            for (j, &c) in row.iter().enumerate() {
                if c > 0.0 {
                    let p: f64 = (0..self.k).map(|t| pzr[i][t] * pfz[t][j]).sum();
                    l += c * (pr * p).ln();
                }
            }
        }
        l
    }

    fn converge(&self, mut pzr: Vec<Vec<f64>>, mut pfz: Vec<Vec<f64>>) -> (f64, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut prev = f64::NEG_INFINITY;
        for _ in 0..20_000 {
            let (a, b) = self.step(&pzr, &pfz);
            pzr = a;
            pfz = b;
            let l = self.loglik(&pzr, &pfz);
            if (l - prev).abs() < 1e-15 * l.abs() {
                break;
            }
            prev = l;
        }
        (self.loglik(&pzr, &pfz), pzr, pfz)
    }
}

fn chunk(flat: &[f64], width: usize) -> Vec<Vec<f64>> {
    flat.chunks(width).map(<[f64]>::to_vec).collect()
}

fn block_corpus() -> Vec<Vec<f64>> {
    vec![vec![3.0, 1.0, 0.0, 0.0], vec![1.0, 2.0, 0.0, 0.0], vec![0.0, 0.0, 2.0, 5.0], vec![0.0, 0.0, 4.0, 1.0]]
}

fn tight() -> PlsaConfig {
    PlsaConfig { max_iters: 20_000, tol: 1e-15, restarts: 3, seed: 11, ..PlsaConfig::default() }
}

#[test]
fn block_corpus_matches_oracle_per_seed() {
    let rows = block_corpus();
    let m = TermMatrix::new(rows.clone()).unwrap();
    let oracle = Oracle { n: rows, k: 2 };
    for seed in 0..5 {
        let (pzr, pfz) = random_init(4, 4, 2, seed);
        let ours = train_from(&m, 2, pzr.clone(), pfz.clone(), 20_000, 1e-15).unwrap();
        let (l, _, _) = oracle.converge(chunk(&pzr, 2), chunk(&pfz, 4));
        assert!((ours.final_loglik() - l).abs() < 1e-8, "seed {seed}: {} vs {l}", ours.final_loglik());
    }
}

#[test]
fn block_corpus_best_restart_matches_oracle() {
    let rows = block_corpus();
    let m = TermMatrix::new(rows.clone()).unwrap();
    let cfg = tight();
    let model = train(&m, 2, &cfg).unwrap();
    let oracle = Oracle { n: rows, k: 2 };
    let best = (0..3)
        .map(|r| {
            let (pzr, pfz) = random_init(4, 4, 2, cfg.seed + r);
            oracle.converge(chunk(&pzr, 2), chunk(&pfz, 4)).0
        })
        .fold(f64::NEG_INFINITY, f64::max);
    assert!((model.final_loglik() - best).abs() < 1e-8);
    // each topic lives on one block
    for t in 0..2 {
        let row = model.topic_row(t);
        let first = row[0] + row[1];
        assert!(!(1e-9..=1.0 - 1e-9).contains(&first), "topic {t}: {row:?}");
    }
    // the library's own likelihood agrees with direct summation
    let direct =
        Oracle { n: block_corpus(), k: 2 }.loglik(&chunk(&model.p_z_given_r, 2), &chunk(&model.p_f_given_z, 4));
    assert!((log_likelihood(&model, &m).unwrap() - direct).abs() < 1e-10);
}

fn random_matrix(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = rng.random_range(2..=20);
    let m = rng.random_range(2..=144);
    (0..n)
        .map(|_| {
            let mut row: Vec<f64> =
                (0..m).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random::<f64>() }).collect();
            let j = rng.random_range(0..m);
            row[j] += 0.5;
            row
        })
        .collect()
}

fn assert_simplex(model: &PlsaModel) {
    for t in 0..model.topics {
        let s: f64 = model.topic_row(t).iter().sum();
        assert!((s - 1.0).abs() < 1e-9, "topic {t} sums to {s}");
    }
    for i in 0..model.regions() {
        let s: f64 = model.region_posterior(i).iter().sum();
        assert!((s - 1.0).abs() < 1e-9, "region {i} sums to {s}");
    }
    let s: f64 = model.p_r.iter().sum();
    assert!((s - 1.0).abs() < 1e-9);
}

#[test]
fn random_corpora_are_monotone_and_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..50 {
        let rows = random_matrix(&mut rng);
        let k = rng.random_range(1..=6);
        let m = TermMatrix::new(rows).unwrap();
        let cfg = PlsaConfig { seed: case, restarts: 1, ..PlsaConfig::default() };
        let model = train(&m, k, &cfg).unwrap();
        for w in model.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "case {case}: {} -> {}", w[0], w[1]);
        }
        assert_simplex(&model);
    }
}

#[test]
fn scale_does_not_move_the_fixed_point() {
    let rows = block_corpus();
    let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * 100.0).collect()).collect();
    let (pzr, pfz) = random_init(4, 4, 2, 3);
    let a = train_from(&TermMatrix::new(rows).unwrap(), 2, pzr.clone(), pfz.clone(), 200, 0.0).unwrap();
    let b = train_from(&TermMatrix::new(scaled).unwrap(), 2, pzr, pfz, 200, 0.0).unwrap();
    for (x, y) in a.p_f_given_z.iter().zip(&b.p_f_given_z).chain(a.p_z_given_r.iter().zip(&b.p_z_given_r)) {
        assert!((x - y).abs() < 1e-8);
    }
}

#[test]
fn permuting_topics_keeps_likelihood() {
    let m = TermMatrix::new(block_corpus()).unwrap();
    let model = train(&m, 2, &PlsaConfig::default()).unwrap();
    let mut swapped = model.clone();
    let (k, f) = (model.topics, model.features);
    for i in 0..model.regions() {
        for t in 0..k {
            swapped.p_z_given_r[i * k + t] = model.p_z_given_r[i * k + (k - 1 - t)];
        }
    }
    for t in 0..k {
        swapped.p_f_given_z[t * f..(t + 1) * f].copy_from_slice(model.topic_row(k - 1 - t));
    }
    let (a, b) = (log_likelihood(&model, &m).unwrap(), log_likelihood(&swapped, &m).unwrap());
    assert!((a - b).abs() < 1e-9 * a.abs());
}

#[test]
fn converged_model_is_a_fixed_point() {
    let m = TermMatrix::new(block_corpus()).unwrap();
    let cfg = PlsaConfig::default();
    let mut model = train(&m, 2, &cfg).unwrap();
    let before = log_likelihood(&model, &m).unwrap();
    let (pzr, pfz) = em_step(&m, 2, &model.p_z_given_r, &model.p_f_given_z);
    model.p_z_given_r = pzr;
    model.p_f_given_z = pfz;
    let after = log_likelihood(&model, &m).unwrap();
    assert!((after - before).abs() < cfg.tol * before.abs());
}

#[test]
fn training_regions_fold_back_to_their_posterior() {
    let m = TermMatrix::new(block_corpus()).unwrap();
    let model = train(&m, 2, &tight()).unwrap();
    let frozen = model.p_f_given_z.clone();
    for i in 0..4 {
        let f = fold_in_counts(&model, m.row(i), 10_000, 1e-10).unwrap();
        let tv: f64 = f.posterior.iter().zip(model.region_posterior(i)).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
        assert!(tv < 1e-4, "region {i}: tv {tv}");
    }
    assert_eq!(model.p_f_given_z, frozen);
}

#[test]
fn topic_rows_fold_to_their_topic() {
    let m = TermMatrix::new(block_corpus()).unwrap();
    let model = train(&m, 2, &tight()).unwrap();
    for t in 0..2 {
        let f = fold_in_counts(&model, model.topic_row(t), 10_000, 1e-10).unwrap();
        assert_eq!(f.ranking[0].0, t);
    }
}

#[test]
fn single_topic_is_closed_form() {
    let rows = block_corpus();
    let m = TermMatrix::new(rows.clone()).unwrap();
    let model = train(&m, 1, &PlsaConfig::default()).unwrap();
    let total: f64 = rows.iter().flatten().sum();
    for j in 0..4 {
        let col: f64 = rows.iter().map(|r| r[j]).sum();
        assert!((model.p_f_given_z[j] - col / total).abs() < 1e-12);
    }
    assert!(model.p_z_given_r.iter().all(|&p| p == 1.0));
    let f = fold_in_counts(&model, &[0.0, 1.0, 0.0, 3.0], 100, 1e-10).unwrap();
    assert_eq!(f.posterior, vec![1.0]);
}
