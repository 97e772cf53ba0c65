use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rctgan::codec::{
    decode, encode, fit_schema, log_frequency_weights, read_csv, Column, ColumnMeta, ConditionSampler, GmmConfig,
    LoadOptions, Table, TableSchema,
};

/// Mixed table: two multi-cluster continuous columns, two discrete ones.
fn mixed_table(n: usize, seed: u64) -> Table {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = [-50.0, 0.0, 40.0];
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    for i in 0..n {
        a.push(centers[rng.random_range(0..3)] + rng.random_range(-1.0..1.0));
        b.push(1e-3 * rng.random_range(0.0..1.0) + if rng.random::<bool>() { 7.0 } else { -7.0 });
        c.push(["red", "green", "blue", "teal"][rng.random_range(0..4)].to_string());
        t.push(if i % 10 == 0 { "fail" } else { "ok" }.to_string());
    }
    Table::new(
        vec!["a".into(), "b".into(), "c".into(), "t".into()],
        vec![Column::Continuous(a), Column::Continuous(b), Column::Discrete(c), Column::Discrete(t)],
    )
    .unwrap()
}

fn assert_round_trip(table: &Table, seed: u64) {
    let (schema, _) = fit_schema(table, "t", &GmmConfig::default()).unwrap();
    let enc = encode(table, &schema, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    assert_eq!(enc.width(), schema.encoded_width());
    let back = decode(&enc.data, &schema).unwrap();
    assert_eq!(back.names(), table.names());
    for (orig, got) in table.columns().iter().zip(back.columns()) {
        match (orig, got) {
            (Column::Continuous(x), Column::Continuous(y)) => {
                for (u, v) in x.iter().zip(y) {
                    assert!((u - v).abs() <= 1e-9 * u.abs().max(1.0), "{u} vs {v}");
                }
            }
            (Column::Discrete(x), Column::Discrete(y)) => assert_eq!(x, y),
            _ => panic!("column kind changed"),
        }
    }
}

#[test]
fn thousand_row_round_trip() {
    assert_round_trip(&mixed_table(1000, 11), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn round_trip_any_seed(seed in any::<u64>(), n in 20usize..300) {
        assert_round_trip(&mixed_table(n, seed), seed ^ 1);
    }

    #[test]
    fn log_weights_are_a_distribution(counts in prop::collection::vec(0u64..100_000, 1..8)) {
        prop_assume!(counts.iter().any(|&c| c > 0));
        let w = log_frequency_weights(&counts);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (i, j) in (0..counts.len()).flat_map(|i| (0..counts.len()).map(move |j| (i, j))) {
            if counts[i] > counts[j] {
                prop_assert!(w[i] > w[j]);
            }
        }
    }
}

#[test]
fn skewed_column_follows_log_weights() {
    let schema = TableSchema::new(
        vec![ColumnMeta::Discrete {
            name: "t".into(),
            categories: vec!["common".into(), "rare".into()],
            counts: vec![9900, 100],
        }],
        "t",
    )
    .unwrap();
    let expected = [9901f64.ln(), 101f64.ln()].map(|w| w / (9901f64.ln() + 101f64.ln()));
    let sampler = ConditionSampler::new(&schema).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 100_000;
    let mut hist = [0usize; 2];
    for _ in 0..n {
        hist[sampler.sample(&mut rng).category] += 1;
    }
    for k in 0..2 {
        let rate = hist[k] as f64 / n as f64;
        assert!((rate - expected[k]).abs() / expected[k] < 0.02, "category {k}: {rate} vs {}", expected[k]);
    }
}

#[test]
fn unseen_category_is_rejected() {
    let table = mixed_table(100, 1);
    let (schema, _) = fit_schema(&table, "t", &GmmConfig::default()).unwrap();
    let mut other = mixed_table(5, 2);
    let bad = Table::new(
        other.names().to_vec(),
        vec![
            other.columns()[0].clone(),
            other.columns()[1].clone(),
            Column::Discrete(vec!["purple".into(); 5]),
            other.columns()[3].clone(),
        ],
    )
    .unwrap();
    assert!(encode(&bad, &schema, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    other = mixed_table(5, 3);
    assert!(encode(&other, &schema, &mut ChaCha8Rng::seed_from_u64(0)).is_ok());
}

#[test]
fn csv_ingest_infers_kinds() {
    let csv = "x,kind,failure\n1.5,a,0\n,b,1\n3,a,0\n";
    let opts = LoadOptions { target: Some("failure".into()), ..LoadOptions::default() };
    let loaded = read_csv(csv.as_bytes(), &opts).unwrap();
    let t = &loaded.table;
    assert_eq!(t.n_rows(), 3);
    match t.column("x").unwrap() {
        Column::Continuous(v) => assert!(v[0] == 1.5 && v[1].is_nan() && v[2] == 3.0),
        _ => panic!("x should be continuous"),
    }
    assert_eq!(t.discrete("failure").unwrap(), ["0", "1", "0"]);
    assert_eq!(t.discrete("kind").unwrap(), ["a", "b", "a"]);
}
