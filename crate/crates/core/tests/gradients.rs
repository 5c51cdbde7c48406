mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xmc_core::cluster::meta_labels_from_map;
use xmc_core::dense::Matrix;
use xmc_core::extreme::ShortlistTargets;
use xmc_core::nn::{accumulate_point, ClassifierBank, EmbeddingBank, Grads, Masks};
use xmc_core::reranker::{RerankerTrainSet, SetTargets};
use xmc_core::shortlist::{Entry, Shortlist, Source};
use xmc_core::surrogate::MetaTargets;
use xmc_core::train::Targets;
use xmc_core::{Dataset, LabelId, SparseVector};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug)]
enum Flavor {
    Surrogate,
    Extreme,
    Reranker,
}

struct Instance {
    x: Vec<(u32, f64)>,
    e: oracles::Dense,
    r: oracles::Dense,
    w: oracles::Dense,
    targets: Vec<(LabelId, f64)>,
    masks: Option<(Vec<f64>, Vec<f64>)>,
}

fn random_labels<R: Rng>(rng: &mut R, l: usize, max: usize) -> Vec<LabelId> {
    let mut v: Vec<LabelId> = (0..rng.gen_range(1..=max)).map(|_| rng.gen_range(0..l as LabelId)).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Targets for point 0 of a tiny dataset, produced by the stage's own target
/// source.
fn targets_for<R: Rng>(rng: &mut R, flavor: Flavor, vocab: usize, x: &[(u32, f64)], l: usize) -> (usize, Vec<(LabelId, f64)>) {
    let raw_labels = 2 * l;
    let feats = vec![SparseVector::from_pairs(x.to_vec()), SparseVector::from_pairs(vec![(0, 1.0)])];
    let mut out = Vec::new();
    match flavor {
        Flavor::Surrogate => {
            let labels = vec![random_labels(rng, raw_labels, 3), random_labels(rng, raw_labels, 2)];
            let d = Dataset::new(vocab, raw_labels, feats, labels).unwrap();
            let map: Vec<u32> = (0..raw_labels).map(|_| rng.gen_range(0..l as u32)).collect();
            let meta = meta_labels_from_map(&d, map, l).unwrap();
            MetaTargets { meta: &meta }.fill(0, &mut out).unwrap();
            (l, out)
        }
        Flavor::Extreme => {
            let labels = vec![random_labels(rng, l, 2), random_labels(rng, l, 2)];
            let d = Dataset::new(vocab, l, feats, labels).unwrap();
            let rows = (0..2)
                .map(|i| {
                    random_labels(rng, l, 3)
                        .into_iter()
                        .filter(|lab| !d.is_positive(i, *lab))
                        .map(|label| Entry {
                            label,
                            score: 0.0,
                            source: Source::Doc,
                        })
                        .collect()
                })
                .collect();
            let sl = Shortlist { num_labels: l, rows };
            ShortlistTargets::new(&d, &sl).unwrap().fill(0, &mut out).unwrap();
            (l, out)
        }
        Flavor::Reranker => {
            let labels = vec![random_labels(rng, l, 2), random_labels(rng, l, 2)];
            let d = Dataset::new(vocab, l, feats, labels.clone()).unwrap();
            let rows: Vec<Vec<LabelId>> = labels
                .iter()
                .map(|p| {
                    let mut r = p.clone();
                    r.extend(random_labels(rng, l, 3));
                    r.sort_unstable();
                    r.dedup();
                    r
                })
                .collect();
            let mined = rows.iter().zip(&labels).map(|(r, p)| r.len() - p.len()).collect();
            let set = RerankerTrainSet { num_labels: l, rows, mined };
            SetTargets { data: &d, set: &set }.fill(0, &mut out).unwrap();
            (l, out)
        }
    }
}

fn near_kink(inst: &Instance) -> bool {
    let me = inst.masks.as_ref().map(|m| m.0.as_slice());
    let mr = inst.masks.as_ref().map(|m| m.1.as_slice());
    let (bag, _, pre, _) = oracles::forward(&inst.x, &inst.e, &inst.r, me, mr);
    bag.iter().chain(&pre).any(|z| z.abs() < 1e-3)
}

fn instance<R: Rng>(rng: &mut R, flavor: Flavor) -> Instance {
    loop {
        let dim = rng.gen_range(2..=8);
        let vocab = rng.gen_range(3..=6);
        let l = rng.gen_range(2..=6);
        let mut toks: Vec<u32> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(0..vocab as u32)).collect();
        toks.sort_unstable();
        toks.dedup();
        let x: Vec<(u32, f64)> = toks.into_iter().map(|t| (t, rng.gen_range(0.2..1.5))).collect();
        let (num_labels, targets) = targets_for(rng, flavor, vocab, &x, l);
        let masks = rng.gen_bool(0.3).then(|| {
            let p = 0.5;
            let draw = |rng: &mut R| (0..dim).map(|_| if rng.gen_bool(p) { 0.0 } else { 1.0 / (1.0 - p) }).collect();
            (draw(rng), draw(rng))
        });
        let inst = Instance {
            x,
            e: oracles::random_dense(rng, vocab, dim, 1.0),
            r: oracles::random_dense(rng, dim, dim, 0.4),
            w: oracles::random_dense(rng, num_labels, dim, 1.0),
            targets,
            masks,
        };
        if !near_kink(&inst) {
            return inst;
        }
    }
}

fn flat(m: &oracles::Dense) -> Vec<f64> {
    m.iter().flatten().copied().collect()
}

fn unflat(rows: usize, cols: usize, v: &[f64]) -> oracles::Dense {
    v.chunks(cols).take(rows).map(<[f64]>::to_vec).collect()
}

/// Largest relative error over the three parameter groups, plus the
/// absolute loss mismatch between crate and oracle.
fn check(inst: &Instance) -> (f64, f64) {
    let vocab = inst.e.len();
    let dim = inst.r.len();
    let labels = inst.w.len();
    let me = inst.masks.as_ref().map(|m| m.0.as_slice());
    let mr = inst.masks.as_ref().map(|m| m.1.as_slice());

    let e = EmbeddingBank::from_token_major(vocab, dim, flat(&inst.e)).unwrap();
    let r = Matrix::from_vec(dim, dim, flat(&inst.r));
    let w = ClassifierBank::from_label_major(labels, dim, flat(&inst.w)).unwrap();
    let x = SparseVector::from_pairs(inst.x.clone());
    let masks = inst.masks.as_ref().map(|(a, b)| Masks {
        embedding: a.clone(),
        residual: b.clone(),
    });
    let mut g = Grads::new(dim, labels, vocab, true, true);
    let loss = accumulate_point(&x, &e, &r, &w, &inst.targets, masks.as_ref(), 1.0, &mut g).unwrap();
    let want_loss = oracles::loss(&inst.x, &inst.e, &inst.r, &inst.w, &inst.targets, me, mr);

    let mut ge = vec![0.0; vocab * dim];
    for (t, row) in g.embeddings.as_ref().unwrap().iter() {
        ge[t as usize * dim..(t as usize + 1) * dim].copy_from_slice(row);
    }
    let gr = g.residual.as_ref().unwrap().as_slice().to_vec();
    let mut gw = vec![0.0; labels * dim];
    for (l, row) in g.classifiers.iter() {
        gw[l as usize * dim..(l as usize + 1) * dim].copy_from_slice(row);
    }

    let mut pe = flat(&inst.e);
    let ne = oracles::central_diff(&mut pe, H, |p| {
        oracles::loss(&inst.x, &unflat(vocab, dim, p), &inst.r, &inst.w, &inst.targets, me, mr)
    });
    let mut pr = flat(&inst.r);
    let nr = oracles::central_diff(&mut pr, H, |p| {
        oracles::loss(&inst.x, &inst.e, &unflat(dim, dim, p), &inst.w, &inst.targets, me, mr)
    });
    let mut pw = flat(&inst.w);
    let nw = oracles::central_diff(&mut pw, H, |p| {
        oracles::loss(&inst.x, &inst.e, &inst.r, &unflat(labels, dim, p), &inst.targets, me, mr)
    });
    let err = oracles::rel_err(&ge, &ne)
        .max(oracles::rel_err(&gr, &nr))
        .max(oracles::rel_err(&gw, &nw));
    (err, (loss - want_loss).abs())
}

fn run(flavor: Flavor, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for k in 0..n {
        let inst = instance(&mut rng, flavor);
        let (err, dl) = check(&inst);
        assert!(dl < 1e-10, "{flavor:?} #{k}: loss differs by {dl}");
        assert!(err < TOL, "{flavor:?} #{k}: relative gradient error {err}");
        worst = worst.max(err);
    }
    println!("{flavor:?}: {n} instances, worst relative error {worst:.2e}");
    worst
}

#[test]
fn surrogate_loss_gradients() {
    run(Flavor::Surrogate, 80, 11);
}

#[test]
fn extreme_loss_gradients() {
    run(Flavor::Extreme, 80, 12);
}

#[test]
fn reranker_loss_gradients() {
    run(Flavor::Reranker, 80, 13);
}

#[allow(dead_code)]
pub fn acceptance() -> String {
    let worst = [(Flavor::Surrogate, 11), (Flavor::Extreme, 12), (Flavor::Reranker, 13)]
        .map(|(f, seed)| run(f, 80, seed))
        .into_iter()
        .fold(0.0, f64::max);
    format!("240 instances over 3 losses, worst relative error {worst:.1e}")
}
