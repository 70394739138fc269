use fsdc::dataio::{
    parse_libsvm_str, serialize_libsvm, split, Dataset, Label, ParseOptions, SparseColumns, SparseVec,
    SplitSpec,
};
use proptest::prelude::*;

fn arb_dataset() -> impl Strategy<Value = Dataset> {
    (1usize..30, 1usize..25).prop_flat_map(|(dim, n)| {
        let column = prop::collection::vec(
            (any::<bool>(), any::<f64>().prop_filter("finite", |v| v.is_finite())),
            dim,
        );
        (Just(dim), prop::collection::vec((column, any::<bool>()), n))
    })
    .prop_map(|(dim, cols)| {
        let mut features = Vec::with_capacity(cols.len());
        let mut labels = Vec::with_capacity(cols.len());
        for (entries, pos) in cols {
            let pairs = entries
                .into_iter()
                .enumerate()
                .filter(|(_, (keep, _))| *keep)
                .map(|(i, (_, v))| (i as u32, v));
            features.push(SparseVec::from_pairs(pairs).unwrap());
            labels.push(if pos { Label::Pos } else { Label::Neg });
        }
        Dataset::new(SparseColumns::new(dim, features).unwrap(), labels).unwrap()
    })
}

fn bits(ds: &Dataset) -> Vec<Vec<(u32, u64)>> {
    ds.features()
        .columns()
        .iter()
        .map(|c| c.indices().iter().zip(c.values()).map(|(&i, v)| (i, v.to_bits())).collect())
        .collect()
}

proptest! {
    #[test]
    fn parse_inverts_serialize(ds in arb_dataset()) {
        let text = serialize_libsvm(&ds);
        let opts = ParseOptions { min_features: ds.n_features(), ..Default::default() };
        let back = parse_libsvm_str(&text, &opts).unwrap();
        prop_assert_eq!(back.n_features(), ds.n_features());
        prop_assert_eq!(back.labels(), ds.labels());
        prop_assert_eq!(bits(&back), bits(&ds));
    }

    #[test]
    fn split_is_a_partition(n in 2usize..200, fraction in 0.05f64..0.95, seed in any::<u64>()) {
        let rows = vec![(0..n).map(|k| k as f64 + 1.0).collect::<Vec<_>>()];
        let labels = (0..n).map(|k| if k % 3 == 0 { Label::Pos } else { Label::Neg }).collect();
        let ds = Dataset::new(SparseColumns::from_dense_rows(&rows).unwrap(), labels).unwrap();
        match split(&ds, &SplitSpec { train_fraction: fraction, seed }) {
            Ok((a, b)) => {
                let ids = |d: &Dataset| -> Vec<u64> {
                    d.features().columns().iter().map(|c| c.values()[0] as u64).collect()
                };
                let mut all = ids(&a);
                all.extend(ids(&b));
                all.sort_unstable();
                prop_assert_eq!(all, (1..=n as u64).collect::<Vec<_>>());
            }
            Err(_) => {
                let n_train = ((n as f64) * fraction).round() as usize;
                prop_assert!(n_train == 0 || n_train == n);
            }
        }
    }
}

#[test]
fn instance_order_follows_file_order() {
    let text = "+1 1:3\n-1 1:1\n+1 1:2\n";
    let ds = parse_libsvm_str(text, &ParseOptions::default()).unwrap();
    let first: Vec<f64> = ds.features().columns().iter().map(|c| c.values()[0]).collect();
    assert_eq!(first, vec![3.0, 1.0, 2.0]);
    assert_eq!(ds.labels(), &[Label::Pos, Label::Neg, Label::Pos]);
}
