use std::io::BufReader;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xmc::codec;
use xmc::xast::Container;
use xmc::xc::{self, ScoredRows};
use xmc::XmcError;
use xmc_core::data::compute_stats;
use xmc_core::extreme::{init_extreme, ExtremeConfig};
use xmc_core::nn::EmbeddingBank;
use xmc_core::{Dataset, SparseVector};

fn random_dataset(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, v, l) = (rng.gen_range(0..40), rng.gen_range(1..100), rng.gen_range(1..50));
    let mut x = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let nnz = rng.gen_range(0..=v.min(10));
        x.push(SparseVector::from_pairs(sample(&mut rng, v, nnz).iter().map(|t| (t as u32, rng.gen::<f64>() * 1e3 - 5e2)).collect()));
        let k = rng.gen_range(0..=l.min(5));
        let mut ls: Vec<u32> = sample(&mut rng, l, k).iter().map(|i| i as u32).collect();
        ls.sort_unstable();
        y.push(ls);
    }
    Dataset::new(v, l, x, y).unwrap()
}

fn xc_round_trip_is_exact_check() {
    for seed in 0..200 {
        let d = random_dataset(seed);
        let mut buf = Vec::new();
        xc::write_xc(&d, &mut buf).unwrap();
        let (back, rep) = xc::parse_xc(BufReader::new(&buf[..])).unwrap();
        assert_eq!(back, d, "seed {seed}");
        assert_eq!(rep.duplicate_labels, 0);
        let mut again = Vec::new();
        xc::write_xc(&back, &mut again).unwrap();
        assert_eq!(again, buf);
    }
}

fn scored_round_trip_is_exact_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rows = ScoredRows {
        num_labels: 30,
        rows: (0..25)
            .map(|_| {
                let k = rng.gen_range(0..8);
                sample(&mut rng, 30, k).iter().map(|l| (l as u32, rng.gen::<f64>())).collect()
            })
            .collect(),
    };
    let mut buf = Vec::new();
    xc::write_scored(&rows, &mut buf).unwrap();
    assert_eq!(xc::parse_scored(&buf[..]).unwrap(), rows);
}

#[test]
fn malformed_input_is_rejected() {
    assert!(matches!(xc::parse_xc("".as_bytes()), Err(XmcError::MalformedHeader(_))));
    assert!(matches!(xc::parse_xc("2 x 2\n".as_bytes()), Err(XmcError::MalformedHeader(_))));
    assert!(matches!(xc::parse_xc("2 3 2\n0 0:1\n".as_bytes()), Err(XmcError::RowCount { .. })));
    assert!(matches!(xc::parse_xc("1 3 2\n0 0:nan\n".as_bytes()), Err(XmcError::NonFiniteValue { line: 1 })));
    assert!(matches!(xc::parse_xc("1 3 2\n0 1:1 1:2\n".as_bytes()), Err(XmcError::DuplicateFeature { line: 1, id: 1 })));
    assert!(matches!(xc::parse_xc("1 3 2\n3 0:1\n".as_bytes()), Err(XmcError::IndexOutOfRange { line: 1, id: 3 })));
    let (d, rep) = xc::parse_xc("1 3 2\n1,1,0 0:1\n".as_bytes()).unwrap();
    assert_eq!(d.point_labels(0), &[0, 1]);
    assert_eq!(rep.duplicate_labels, 1);
}

#[test]
fn network_survives_container_round_trip() {
    let d = random_dataset(3);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let e = EmbeddingBank::random(d.num_features(), 6, &mut rng);
    let net = init_extreme(&d, e, &ExtremeConfig::default()).unwrap();
    let mut c = Container::new();
    codec::put_network(&mut c, "net", &net).unwrap();
    let mut buf = Vec::new();
    c.write_to(&mut buf).unwrap();
    let back = Container::read_from(&buf[..]).unwrap();
    let got = codec::get_network(&back, "net").unwrap();
    assert_eq!(got.embeddings, net.embeddings);
    assert_eq!(got.classifiers, net.classifiers);
    assert_eq!(got.residual.r, net.residual.r);
    assert_eq!(got.residual.lambda, net.residual.lambda);

    let mut bad = buf.clone();
    bad.truncate(buf.len() - 3);
    assert!(Container::read_from(&bad[..]).is_err());
}

/// Runs only when `XMC_AMAZONTITLES_670K_TRAIN` names the training file of
/// the public AmazonTitles-670K release.
fn amazon_titles_check() -> Option<String> {
    let Ok(path) = std::env::var("XMC_AMAZONTITLES_670K_TRAIN") else {
        eprintln!("XMC_AMAZONTITLES_670K_TRAIN not set; skipping");
        return None;
    };
    let f = std::fs::File::open(&path).unwrap();
    let (d, _) = xc::parse_xc(BufReader::new(f)).unwrap();
    let s = compute_stats(&d);
    assert_eq!((s.num_points, s.num_features, s.num_labels), (485_176, 66_666, 670_091));
    assert!((s.avg_labels_per_point - 5.39).abs() <= 0.01, "{}", s.avg_labels_per_point);
    Some(format!("AmazonTitles-670K: N={} V={} L={} avg labels {:.3}", s.num_points, s.num_features, s.num_labels, s.avg_labels_per_point))
}

#[test]
fn xc_round_trip_is_exact() {
    xc_round_trip_is_exact_check();
}

#[test]
fn scored_round_trip_is_exact() {
    scored_round_trip_is_exact_check();
}

#[test]
fn amazon_titles_statistics() {
    amazon_titles_check();
}

#[allow(dead_code)]
pub fn acceptance() -> String {
    xc_round_trip_is_exact_check();
    scored_round_trip_is_exact_check();
    let ext = amazon_titles_check().unwrap_or_else(|| "AmazonTitles-670K not supplied, statistics check skipped".to_string());
    format!("200 random files round-trip byte-exact; {ext}")
}
