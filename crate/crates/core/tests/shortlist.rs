use xmc_core::cluster::{build_cluster_tree, compute_centroids, make_meta_labels};
use xmc_core::extreme::ExtremeConfig;
use xmc_core::hnsw::HnswParams;
use xmc_core::nn::EmbeddingBank;
use xmc_core::shortlist::{self, Caps, ShortlistParams, Shortlister, Source};
use xmc_core::surrogate::{train_surrogate, SurrogateConfig};
use xmc_core::synth::{synth_dataset, SynthParams};
use xmc_core::theorem::{shortlist_overlap_vs_lambda, OverlapParams};
use xmc_core::train::NoHooks;
use xmc_core::Dataset;

fn setup() -> (Dataset, EmbeddingBank) {
    let d = synth_dataset(SynthParams::new(8, 60, 8, 32, 0.05, 1)).unwrap().dataset;
    let tree = build_cluster_tree(&compute_centroids(&d), None, 16, 0).unwrap();
    let meta = make_meta_labels(&d, &tree).unwrap();
    let cfg = SurrogateConfig {
        dim: 32,
        num_clusters: 16,
        learning_rate: 0.01,
        batch_size: 32,
        epochs: 5,
        ..SurrogateConfig::default()
    };
    let e = train_surrogate(&d, &meta, &cfg, None, &mut NoHooks).unwrap().model.embeddings;
    (d, e)
}

fn shortlister(d: &Dataset, e: &EmbeddingBank, caps: Caps) -> (Shortlister, shortlist::CorpusEmbedding) {
    let corpus = shortlist::embed_corpus(d, e).unwrap();
    let reps = shortlist::label_representatives(d, &corpus, 4, 4, 0);
    let params = ShortlistParams {
        caps,
        doc_neighbors: 32,
        ef_search: 64,
    };
    let hnsw = HnswParams {
        m: 16,
        ef_construction: 100,
        seed: 0,
    };
    (Shortlister::build(d, &corpus, &reps, hnsw, params).unwrap(), corpus)
}

fn training_shortlists_exclude_positives_and_respect_caps_check() {
    let (d, e) = setup();
    let small = Caps {
        doc_route: 16,
        centroid_route: 16,
        random: 4,
        total: 24,
    };
    for caps in [small, Caps::default()] {
        let (s, corpus) = shortlister(&d, &e, caps);
        let sl = s.training_shortlists(&d, &corpus, 3);
        assert_eq!(sl.len(), d.num_points());
        for (i, row) in sl.rows.iter().enumerate() {
            assert!(row.iter().all(|en| !d.is_positive(i, en.label)), "point {i} has a positive");
            assert!(row.len() <= caps.total && row.len() <= 500);
            let random = row.iter().filter(|en| en.source == Source::Random).count();
            assert!(random <= caps.random && random <= 50);
            let mut ids: Vec<u32> = row.iter().map(|en| en.label).collect();
            ids.sort_unstable();
            ids.dedup();
            assert_eq!(ids.len(), row.len(), "point {i} has duplicate labels");
        }
        assert_eq!(sl, s.training_shortlists(&d, &corpus, 3));
    }
}

fn overlap_is_one_at_zero_lambda_and_non_increasing_check() -> String {
    let (d, e) = setup();
    let caps = Caps {
        doc_route: 16,
        centroid_route: 16,
        random: 0,
        total: 24,
    };
    let (s, corpus) = shortlister(&d, &e, caps);
    let train_sl = s.training_shortlists(&d, &corpus, 0);
    let p = OverlapParams {
        extreme: ExtremeConfig {
            learning_rate: 0.01,
            batch_size: 32,
            epochs: 5,
            dropout: 0.0,
            ..ExtremeConfig::default()
        },
        hnsw: HnswParams {
            m: 16,
            ef_construction: 100,
            seed: 0,
        },
        shortlist: ShortlistParams {
            caps,
            doc_neighbors: 32,
            ef_search: 64,
        },
        head_count: 4,
        centers_per_head: 4,
    };
    let lambdas = [0.0, 0.05, 0.1, 0.25, 0.5, 1.0];
    let curve = shortlist_overlap_vs_lambda(&d, &e, &train_sl, &lambdas, &p).unwrap();
    for pt in &curve {
        println!("λ = {:.2}  σ = {:.4}  overlap = {:.4}", pt.lambda, pt.sigma, pt.overlap);
        assert!(pt.sigma <= pt.lambda * 1.001 + 1e-12);
    }
    assert_eq!(curve[0].overlap, 1.0);
    for w in curve.windows(2) {
        assert!(w[1].overlap <= w[0].overlap + 0.02, "{:?} -> {:?}", w[0], w[1]);
    }
    let pts: Vec<String> = curve.iter().map(|p| format!("{}:{:.3}", p.lambda, p.overlap)).collect();
    pts.join(" ")
}

#[test]
fn training_shortlists_exclude_positives_and_respect_caps() {
    training_shortlists_exclude_positives_and_respect_caps_check();
}

#[test]
fn overlap_is_one_at_zero_lambda_and_non_increasing() {
    overlap_is_one_at_zero_lambda_and_non_increasing_check();
}

#[allow(dead_code)]
pub fn acceptance() -> String {
    training_shortlists_exclude_positives_and_respect_caps_check();
    format!("no positives, caps respected; overlap by λ {}", overlap_is_one_at_zero_lambda_and_non_increasing_check())
}
