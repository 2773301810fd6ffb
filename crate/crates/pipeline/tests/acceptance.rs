//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use earlysib::commands::{self, Run};
use earlysib::config::PipelineConfig;
use earlysib_core::corpus::{Corpus, Interaction, Kind, Label, Timestamp};
use earlysib_core::earlysib::{EarlySibModel, EncoderSpec, ModelConfig};
use earlysib_core::explain::{complexity_of, exact_values, sampled_values, shapley_exact, Game, ModelGame};
use earlysib_core::metrics::{compute_metrics, Confusion};
use earlysib_core::rng;
use earlysib_core::stats::{mcnemar, mcnemar_from_counts};
use earlysib_core::synthgen::{bayes_oracle_rate, bayes_oracle_rate_windowed, generate_corpus, GenConfig, OracleWindow};
use earlysib_core::trainer::{context_window_sweep, fold_split, run_baselines, stratified_kfold, TrainConfig};
use earlysib_core::userset::{build_user_dataset, select_context, ContextConfig};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// Independent reference implementations.

/// Every coalition value of `game`, indexed by bitmask.
fn table_of<G: Game + ?Sized>(game: &G) -> Vec<f64> {
    let n = game.players();
    (0..1usize << n).map(|s| game.value(&(0..n).map(|i| s >> i & 1 == 1).collect::<Vec<_>>())).collect()
}

/// Shapley values as the average marginal contribution over all n!
/// orderings.
fn brute_force(table: &[f64]) -> Vec<f64> {
    let n = table.len().trailing_zeros() as usize;
    let mut phi = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut count = 0u64;
    fn visit(k: usize, order: &mut Vec<usize>, table: &[f64], phi: &mut [f64], count: &mut u64) {
        if k == order.len() {
            let mut s = 0usize;
            for &p in order.iter() {
                phi[p] += table[s | 1 << p] - table[s];
                s |= 1 << p;
            }
            *count += 1;
            return;
        }
        for i in k..order.len() {
            order.swap(k, i);
            visit(k + 1, order, table, phi, count);
            order.swap(k, i);
        }
    }
    visit(0, &mut order, table, &mut phi, &mut count);
    phi.iter_mut().for_each(|p| *p /= count.max(1) as f64);
    phi
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

struct Table(Vec<f64>);

impl Game for Table {
    fn players(&self) -> usize {
        self.0.len().trailing_zeros() as usize
    }
    fn value(&self, mask: &[bool]) -> f64 {
        self.0[mask.iter().enumerate().map(|(i, &b)| (b as usize) << i).sum::<usize>()]
    }
}

/// Normal upper tail doubled, by Simpson integration of the density.
fn chi2_1dof_tail(x: f64) -> f64 {
    let (a, b, n) = (x.sqrt(), 40.0, 200_000);
    let h = (b - a) / n as f64;
    let f = |t: f64| (-t * t / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    2.0 * s * h / 3.0
}

fn entropy_ref(phi: &[f64]) -> f64 {
    let total: f64 = phi.iter().map(|p| p.abs()).sum();
    let h: f64 = phi.iter().map(|p| p.abs() / total).filter(|&q| q > 0.0).map(|q| -q * q.ln()).sum();
    h / (phi.len() as f64).ln()
}

// Fixtures.

fn encoder(dim: usize, max_tokens: usize) -> EncoderSpec {
    EncoderSpec { vocab_size: 1024, layers: 1, heads: 2, dim, max_tokens, trainable: true }
}

fn small_model(dim: usize) -> ModelConfig {
    ModelConfig {
        body: encoder(dim, 16),
        titletag: encoder(dim, 48),
        lstm_hidden: dim,
        attention_dim: dim,
        fusion_dim: dim,
        dropout: 0.0,
        ..ModelConfig::default()
    }
}

fn small_corpus(seed: u64) -> (Corpus, Vec<earlysib_core::userset::UserRecord>) {
    let g = GenConfig { n_users: 80, sib_prevalence: 0.3, seed, ..GenConfig::default() };
    let (corpus, _, labels) = generate_corpus(&g).unwrap();
    let ds = build_user_dataset(&corpus, &labels).unwrap();
    (corpus, ds.records)
}

fn interaction(id: &str, user: &str, t: i64, kind: Kind, title: &str, body: &str, parent: Option<&str>) -> Interaction {
    Interaction {
        id: id.into(),
        user: user.into(),
        kind,
        timestamp: Timestamp(t),
        thread_id: parent.unwrap_or(id).into(),
        title: (kind == Kind::Post).then(|| title.into()),
        body: body.into(),
        tags: if title.is_empty() { vec![] } else { vec!["school".into()] },
        parent_id: parent.map(Into::into),
    }
}

fn quiet_run(dir: &Path, sets: &[&str]) -> Run {
    let mut c = PipelineConfig::default();
    c.paths.out = dir.to_path_buf();
    let c = c.with_overrides(&sets.iter().map(|s| s.to_string()).collect::<Vec<_>>()).unwrap();
    let mut run = Run::open(c).unwrap();
    run.quiet = true;
    run
}

/// detect-train, label, build-users and train on a fresh synthetic corpus.
fn full_pipeline(run: &Run) -> commands::TrainResult {
    commands::synth(run).unwrap();
    commands::detect_train(run).unwrap();
    commands::label(run).unwrap();
    commands::build_users(run).unwrap();
    commands::train(run).unwrap()
}

// Criteria.

fn metric_identities() -> Outcome {
    let c = Confusion { tn: 74, fp: 26, fn_: 29, tp: 71 };
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    for (p, y, n) in [(0u8, 0u8, c.tn), (1, 0, c.fp), (0, 1, c.fn_), (1, 1, c.tp)] {
        preds.extend(std::iter::repeat_n(p, n as usize));
        labels.extend(std::iter::repeat_n(y, n as usize));
    }
    let m = compute_metrics(&preds, &labels).map_err(|e| e.to_string())?;
    let want = (74.0 / 100.0 + 71.0 / 100.0) / 2.0;
    let ba_ok = (m.balanced_accuracy - want).abs() < 1e-12 && (m.balanced_accuracy - 0.725).abs() < 1e-12;

    let y: Vec<Label> = (0..200).map(|i| if i % 5 == 0 { Label::Sib } else { Label::NoSib }).collect();
    let folds = stratified_kfold(&y, 5, 1).map_err(|e| e.to_string())?;
    let (_, majority) = run_baselines(&y, &folds, 1).map_err(|e| e.to_string())?;
    let maj_ok = majority.balanced_accuracy.mean == 0.5
        && majority.recall.mean == 0.0
        && majority.precision.is_none()
        && majority.folds.iter().all(|f| f.metrics.precision.is_none());
    check(
        ba_ok && maj_ok,
        format!(
            "balanced accuracy {:.6} (want 0.725); majority BA {} recall {} precision {:?}",
            m.balanced_accuracy, majority.balanced_accuracy.mean, majority.recall.mean, majority.precision
        ),
    )
}

/// Ten model games (full architecture, random weights) and ten random set
/// functions, all with at most eight players.
fn shapley_fixtures() -> Vec<(String, Vec<f64>)> {
    let mut out = Vec::new();
    let (corpus, records) = small_corpus(11);
    let model = EarlySibModel::new(small_model(8)).unwrap();
    let mut users = records.iter().filter(|r| r.history.len() >= 2);
    for i in 0..10 {
        let rec = users.next().expect("enough users with history");
        let ctx_cfg = ContextConfig { max_interactions: 2 + i % 7, ..ContextConfig::default() };
        let ctx = select_context(&corpus, rec, &ctx_cfg).unwrap();
        let game = ModelGame::new(&model, &corpus, &ctx).unwrap();
        out.push((format!("model:{}", rec.user), table_of(&game)));
    }
    let mut r = rng::seeded(2024);
    for i in 0..10 {
        let n = 1 + i % 8;
        let t: Vec<f64> = (0..1usize << n).map(|_| rng::unit(&mut r)).collect();
        out.push((format!("random:{n}"), t));
    }
    out
}

fn shapley_oracle() -> Outcome {
    let (corpus, records) = small_corpus(11);
    let model = EarlySibModel::new(small_model(8)).unwrap();
    let mut worst_exact = 0.0f64;
    let mut worst_sampled = 0.0f64;
    for (k, (_, table)) in shapley_fixtures().into_iter().enumerate() {
        let game = Table(table);
        let reference = brute_force(&game.0);
        let exact = exact_values(&game).map_err(|e| e.to_string())?;
        let sampled = sampled_values(&game, 2000, 100 + k as u64).map_err(|e| e.to_string())?;
        worst_exact = worst_exact.max(linf(&exact, &reference));
        worst_sampled = worst_sampled.max(linf(&sampled, &exact));
    }
    // The user-facing entry point agrees with the reference too.
    let rec = records.iter().find(|r| r.history.len() >= 6).unwrap();
    let ctx = select_context(&corpus, rec, &ContextConfig { max_interactions: 6, ..ContextConfig::default() }).unwrap();
    let e = shapley_exact(&model, &corpus, &rec.user, &ctx).map_err(|e| e.to_string())?;
    let reference = brute_force(&table_of(&ModelGame::new(&model, &corpus, &ctx).unwrap()));
    worst_exact = worst_exact.max(linf(&e.phi, &reference));
    check(
        worst_exact <= 1e-6 && worst_sampled <= 0.05,
        format!("max |exact - brute force| {worst_exact:.2e}; max |sampled(2000) - exact| {worst_sampled:.4}"),
    )
}

fn shapley_axioms() -> Outcome {
    let mut failures = Vec::new();
    let mut cases = 0;
    // Efficiency on every oracle fixture.
    for (name, table) in shapley_fixtures() {
        let phi = exact_values(&Table(table.clone())).unwrap();
        let gap = phi.iter().sum::<f64>() - (table[table.len() - 1] - table[0]);
        cases += 1;
        if gap.abs() > 1e-6 {
            failures.push(format!("efficiency {name}: {gap:e}"));
        }
    }
    // Weighted games with a planted duplicate pair and a planted null player.
    let mut r = rng::seeded(77);
    for n in 3..=8 {
        let mut w: Vec<f64> = (0..n).map(|_| rng::unit(&mut r) * 2.0 - 0.5).collect();
        w[1] = w[0];
        w[n - 1] = 0.0;
        let table: Vec<f64> = (0..1usize << n)
            .map(|s| {
                let x: f64 = (0..n).filter(|i| s >> i & 1 == 1).map(|i| w[i]).sum();
                1.0 / (1.0 + (-2.0 * x).exp())
            })
            .collect();
        let phi = exact_values(&Table(table)).unwrap();
        cases += 1;
        if (phi[0] - phi[1]).abs() > 1e-9 || phi[n - 1].abs() > 1e-9 {
            failures.push(format!("weighted game n={n}: {phi:?}"));
        }
    }
    // Model games. Title+tag branch only: identical posts are symmetric and
    // a reply to an untitled post contributes nothing.
    let corpus = Corpus::new(vec![
        interaction("a", "u", 10, Kind::Post, "rot dag", "eerste", None),
        interaction("b", "u", 20, Kind::Post, "rot dag", "tweede", None),
        interaction("c", "u", 30, Kind::Post, "weekend", "strand", None),
        interaction("p", "v", 5, Kind::Post, "", "y", None),
        interaction("r", "u", 40, Kind::Reply, "", "ok", Some("p")),
        interaction("d", "u", 50, Kind::Post, "weekend", "strand", None),
    ])
    .unwrap();
    let mut titletag = small_model(8);
    titletag.use_body = false;
    titletag.use_lstm = false;
    titletag.context.include_prefix = false;
    // Context a, c, r, d: c and d are duplicates, r is the null player.
    let ctx = [0, 2, 4, 5];
    let m = EarlySibModel::new(titletag).unwrap();
    let e = shapley_exact(&m, &corpus, "u", &ctx).unwrap();
    cases += 1;
    if (e.phi[1] - e.phi[3]).abs() > 1e-9 || e.phi[2].abs() > 1e-12 || e.efficiency_gap().abs() > 1e-6 {
        failures.push(format!("title+tag model: {:?}", e.phi));
    }
    // Body branch with attention pooling and no recurrence: two posts with
    // the same text are interchangeable.
    let mut body = small_model(8);
    body.use_titletag = false;
    body.use_lstm = false;
    let m = EarlySibModel::new(body).unwrap();
    let e = shapley_exact(&m, &corpus, "u", &[2, 4, 5]).unwrap();
    cases += 1;
    // Context c, r, d.
    if (e.phi[0] - e.phi[2]).abs() > 1e-9 || e.efficiency_gap().abs() > 1e-6 {
        failures.push(format!("body model: {:?}", e.phi));
    }
    check(failures.is_empty(), format!("{} of {cases} axiom cases hold {}", cases - failures.len(), failures.join("; ")))
}

fn entropy_properties() -> Outcome {
    let mut bad = Vec::new();
    for n in 2..10 {
        let mut phi = vec![0.0; n];
        phi[n / 2] = -0.4;
        let c = complexity_of(&phi);
        if !(c.defined && c.entropy.abs() < 1e-12) {
            bad.push(format!("single nonzero n={n}: {}", c.entropy));
        }
        let uniform: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.25 } else { -0.25 }).collect();
        let c = complexity_of(&uniform);
        if (c.entropy - 1.0).abs() > 1e-12 {
            bad.push(format!("uniform n={n}: {}", c.entropy));
        }
    }
    let mut r = rng::seeded(5);
    for _ in 0..1000 {
        let n = 2 + rng::index(&mut r, 30);
        let phi: Vec<f64> = (0..n).map(|_| rng::unit(&mut r) * 2.0 - 1.0).collect();
        let c = complexity_of(&phi);
        if !(0.0..=1.0).contains(&c.entropy) || (c.entropy - entropy_ref(&phi)).abs() > 1e-9 {
            bad.push(format!("random {phi:?}: {}", c.entropy));
        }
    }
    let hand = complexity_of(&[0.3, 0.1]).entropy;
    let want = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2());
    if (hand - want).abs() > 1e-9 || (hand - 0.811).abs() > 1e-3 {
        bad.push(format!("(0.3, 0.1): {hand}"));
    }
    check(bad.is_empty(), format!("complexity(0.3, 0.1) = {hand:.4}; {} violations {}", bad.len(), bad.join("; ")))
}

fn gradient_check() -> Outcome {
    let (corpus, records) = small_corpus(3);
    let mut m = EarlySibModel::new(small_model(16)).unwrap();
    let rec = records.iter().find(|r| r.label == Label::Sib && r.history.len() >= 3).unwrap();
    let ctx = select_context(&corpus, rec, &m.config().context).unwrap();
    let p = m.prepare(&corpus, &ctx).unwrap();
    let (_, grads) = m.loss_and_gradients(&p, Label::Sib);
    let ids: Vec<_> = m.params().ids().collect();
    let mut r = rng::seeded(16);
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut draws = 0;
    while checked < 10 {
        draws += 1;
        assert!(draws < 10_000, "no parameters with a gradient");
        let id = ids[rng::index(&mut r, ids.len())];
        let k = rng::index(&mut r, m.params().get(id).len());
        let an = grads.get(id).data[k];
        // Embedding rows of absent tokens have no gradient at all.
        if an == 0.0 {
            continue;
        }
        let x = m.params().get(id).data[k];
        let eps = 1e-6;
        m.params_mut().get_mut(id).data[k] = x + eps;
        let up = m.loss(&p, Label::Sib);
        m.params_mut().get_mut(id).data[k] = x - eps;
        let down = m.loss(&p, Label::Sib);
        m.params_mut().get_mut(id).data[k] = x;
        let fd = (up - down) / (2.0 * eps);
        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
        worst = worst.max(rel);
        checked += 1;
    }
    check(worst <= 1e-3, format!("max relative error {worst:.2e} over {checked} parameters (dim 16)"))
}

fn separability() -> Outcome {
    let gen = GenConfig { n_users: 2000, sib_prevalence: 0.04, signal_strength: 14.0, ..GenConfig::default() };
    let oracle = bayes_oracle_rate(&gen, 20_000).map_err(|e| e.to_string())?;
    let high = tempfile::tempdir().unwrap();
    let t = full_pipeline(&quiet_run(high.path(), &["gen.n_users=2000", "gen.sib_prevalence=0.04", "gen.signal_strength=14"]));
    let null = tempfile::tempdir().unwrap();
    let z = full_pipeline(&quiet_run(null.path(), &["gen.n_users=2000", "gen.sib_prevalence=0.04", "gen.signal_strength=0"]));
    let (ba, ba0) = (t.balanced_accuracy.mean, z.balanced_accuracy.mean);
    check(
        oracle >= 0.97 && ba >= 0.90 && ba0 <= 0.58,
        format!("oracle {oracle:.3}; balanced accuracy {ba:.3} ± {:.3} with signal, {ba0:.3} ± {:.3} without", t.balanced_accuracy.sd, z.balanced_accuracy.sd),
    )
}

fn context_window_trend() -> Outcome {
    let gen = GenConfig { n_users: 1000, sib_prevalence: 0.25, signal_strength: 2.5, ..GenConfig::default() };
    let (corpus, _, labels) = generate_corpus(&gen).map_err(|e| e.to_string())?;
    let ds = build_user_dataset(&corpus, &labels).map_err(|e| e.to_string())?;
    let window = |n| Some(OracleWindow { max_interactions: n, prioritize_posts: true });
    let o1 = bayes_oracle_rate_windowed(&gen, 10_000, window(1)).map_err(|e| e.to_string())?;
    let o15 = bayes_oracle_rate_windowed(&gen, 10_000, window(15)).map_err(|e| e.to_string())?;
    let tc = TrainConfig::default();
    let pts = context_window_sweep(&ModelConfig::compact(), &corpus, &ds.records, &tc, &tc.hyper, &[1, 15])
        .map_err(|e| e.to_string())?;
    let (a, b) = (pts[0].balanced_accuracy, pts[1].balanced_accuracy);
    check(
        b.mean - a.mean >= 0.03,
        format!(
            "N=1 {:.3} ± {:.3}, N=15 {:.3} ± {:.3}, gain {:.3} (oracle {o1:.3} to {o15:.3})",
            a.mean, a.sd, b.mean, b.sd, b.mean - a.mean
        ),
    )
}

fn leakage_invariants() -> Outcome {
    let mut violations = Vec::new();
    let mut checked = 0usize;
    for seed in 0..10u64 {
        let gen = GenConfig { n_users: 300, sib_prevalence: 0.2, seed, ..GenConfig::default() };
        let (corpus, truth, labels) = generate_corpus(&gen).unwrap();
        let sib_posts: HashSet<&str> =
            labels.iter().filter(|l| l.label == Label::Sib).map(|l| l.post_id.as_str()).collect();
        let ds = build_user_dataset(&corpus, &labels).unwrap();
        let cfg = ModelConfig::compact();
        for rec in &ds.records {
            checked += 1;
            if let Some(t) = rec.first_sib_time {
                if let Some(&i) = rec.history.iter().find(|&&i| corpus.get(i).timestamp >= t) {
                    violations.push(format!("seed {seed}: {} at/after first SIB", corpus.get(i).id));
                }
            }
            let ctx = select_context(&corpus, rec, &cfg.context).unwrap();
            for &i in &ctx {
                let it = corpus.get(i);
                if sib_posts.contains(it.id.as_str()) || truth.is_sib_post(&it.id) {
                    violations.push(format!("seed {seed}: SIB post {} in input of {}", it.id, rec.user));
                }
            }
        }
        let y: Vec<Label> = ds.records.iter().map(|r| r.label).collect();
        let tc = TrainConfig { seed, ..TrainConfig::default() };
        let folds = stratified_kfold(&y, tc.k_folds, seed).unwrap();
        for (k, test) in folds.iter().enumerate() {
            let test_set: HashSet<usize> = test.iter().copied().collect();
            let (train, val) = fold_split(&y, test, &tc.hyper, &tc, k).unwrap();
            if let Some(i) = train.iter().chain(&val).find(|i| test_set.contains(i)) {
                violations.push(format!("seed {seed} fold {k}: test record {i} in training data"));
            }
            if train.iter().any(|i| val.contains(i)) {
                violations.push(format!("seed {seed} fold {k}: validation record in training data"));
            }
        }
    }
    check(violations.is_empty(), format!("{} violations over {checked} user records and 10 seeds {}", violations.len(), violations.join("; ")))
}

fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        if name.ends_with(".csv") {
            out.insert(name, fs::read(&p).unwrap());
        }
    }
    out
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ra, rb) = (quiet_run(a.path(), &[]), quiet_run(b.path(), &[]));
    let ta = full_pipeline(&ra);
    let tb = full_pipeline(&rb);
    let da = commands::load_detector(&ra).unwrap();
    let db = commands::load_detector(&rb).unwrap();
    let (ca, cb) = (artifacts(&ra.dir), artifacts(&rb.dir));
    let differing: Vec<&String> = ca.keys().filter(|k| ca.get(*k) != cb.get(*k)).collect();
    let same_hashes = ta.param_hashes == tb.param_hashes
        && earlysib::checkpoint::param_hash(da.params()) == earlysib::checkpoint::param_hash(db.params());
    check(
        ca.len() >= 5 && ca.len() == cb.len() && differing.is_empty() && same_hashes,
        format!(
            "{} CSV files compared, {} differ {:?}; fold checkpoint hashes equal: {same_hashes}",
            ca.len(),
            differing.len(),
            differing
        ),
    )
}

fn mcnemar_cases() -> Outcome {
    let mut bad = Vec::new();
    let (chi2, p) = mcnemar_from_counts(10, 0);
    let want = (10.0f64 - 1.0).powi(2) / 10.0;
    if chi2 != want || (chi2 - 8.1).abs() > 1e-12 || (p - chi2_1dof_tail(8.1)).abs() > 1e-9 {
        bad.push(format!("b=10 c=0: chi2 {chi2} p {p}"));
    }
    for b in [1u64, 3, 7, 25] {
        let (chi2, _) = mcnemar_from_counts(b, b);
        if chi2 != 1.0 / (2 * b) as f64 {
            bad.push(format!("b=c={b}: chi2 {chi2}"));
        }
    }
    let (zero, p0) = mcnemar_from_counts(0, 0);
    if p0 != 1.0 || zero != 0.0 {
        bad.push(format!("b=c=0: chi2 {zero} p {p0}"));
    }
    // Paired predictions: A right and B wrong on ten items, equal elsewhere.
    let labels: Vec<u8> = (0..30).map(|i| (i % 2) as u8).collect();
    let a = labels.clone();
    let bp: Vec<u8> = labels.iter().enumerate().map(|(i, &y)| if i < 10 { 1 - y } else { y }).collect();
    let t = mcnemar(&a, &bp, &labels).map_err(|e| e.to_string())?;
    if (t.b, t.c, t.n) != (10, 0, 30) || t.chi2 != want {
        bad.push(format!("paired: {t:?}"));
    }
    check(bad.is_empty(), format!("chi2(10, 0) = {chi2:.1}; {} mismatches {}", bad.len(), bad.join("; ")))
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("metric identities", metric_identities),
        ("Shapley oracle equivalence", shapley_oracle),
        ("Shapley axioms", shapley_axioms),
        ("entropy properties", entropy_properties),
        ("gradient correctness", gradient_check),
        ("pipeline separability", separability),
        ("context-window trend", context_window_trend),
        ("truncation and leakage invariants", leakage_invariants),
        ("determinism", determinism),
        ("McNemar correctness", mcnemar_cases),
    ];
    // ACCEPTANCE_ONLY=2,5 runs a subset; the others report SKIP.
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let _ = std::io::stdout().write_all(b"\n");
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            let _ = std::io::stdout().write_all(format!("criterion {:>2} {name}: SKIP\n", i + 1).as_bytes());
            continue;
        }
        let start = std::time::Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        // Written past the test harness capture so the lines always show.
        let line = format!("criterion {:>2} {name}: {status} ({detail}) [{:.1}s]\n", i + 1, start.elapsed().as_secs_f64());
        let _ = std::io::stdout().write_all(line.as_bytes());
        let _ = std::io::stdout().flush();
        if outcome.is_err() {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
