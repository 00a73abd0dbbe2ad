use std::collections::HashSet;

use llmq_core::catalog::{read_csv, write_csv};
use llmq_core::{Catalog, Column, DataType, Schema, Table, Value};
use proptest::prelude::*;

const TYPES: [DataType; 5] = [DataType::Text, DataType::Int64, DataType::Float64, DataType::Bool, DataType::Vector];

fn cell(ty: DataType) -> BoxedStrategy<Value> {
    let present = match ty {
        // Empty text is indistinguishable from null in CSV.
        DataType::Text => "[a-zA-Z0-9 ,\"'\n\t.;-]{1,24}".prop_map(Value::text).boxed(),
        DataType::Int64 => any::<i64>().prop_map(Value::Int).boxed(),
        DataType::Float64 => prop_oneof![
            (-1.0e6..1.0e6f64),
            any::<f64>().prop_filter("finite", |f| f.is_finite()),
            (-1000i64..1000).prop_map(|i| i as f64),
        ]
        .prop_map(Value::Float)
        .boxed(),
        DataType::Bool => any::<bool>().prop_map(Value::Bool).boxed(),
        DataType::Vector => prop::collection::vec(-10.0f32..10.0, 0..6).prop_map(|v| Value::Vector(v.into())).boxed(),
    };
    prop_oneof![1 => Just(Value::Null), 6 => present].boxed()
}

fn table() -> impl Strategy<Value = Table> {
    prop::collection::vec(0usize..TYPES.len(), 1..5).prop_flat_map(|kinds| {
        let types: Vec<DataType> = kinds.iter().map(|k| TYPES[*k]).collect();
        let row: Vec<BoxedStrategy<Value>> = types.iter().map(|t| cell(*t)).collect();
        prop::collection::vec(row, 0..40).prop_map(move |rows| {
            let schema = Schema::new(types.iter().enumerate().map(|(i, t)| Column::new(format!("c{i}"), *t)).collect());
            Table::new("t", schema, rows).unwrap()
        })
    })
}

fn same(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Float(x), Value::Float(y)) => x.to_bits() == y.to_bits() || x == y,
        (Value::Vector(x), Value::Vector(y)) => x.len() == y.len() && x.iter().zip(y.iter()).all(|(p, q)| p == q),
        _ => a == b,
    }
}

proptest! {
    #[test]
    fn csv_round_trip_is_lossless(t in table()) {
        let mut buf = Vec::new();
        write_csv(&t, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), "t", Some(t.schema().clone())).unwrap();
        prop_assert_eq!(back.row_count(), t.row_count());
        for (r1, r2) in t.rows().iter().zip(back.rows()) {
            for (a, b) in r1.iter().zip(r2) {
                prop_assert!(same(a, b), "{:?} vs {:?}", a, b);
            }
        }
    }

    #[test]
    fn stats_match_a_naive_scan(values in prop::collection::vec(prop_oneof![1 => Just(None), 4 => (0i64..50).prop_map(Some)], 0..2000)) {
        let rows: Vec<Vec<Value>> = values
            .iter()
            .map(|v| vec![v.map_or(Value::Null, Value::Int), v.map_or(Value::Null, |i| Value::text(format!("k{}", i % 7)))])
            .collect();
        let catalog = Catalog::new();
        catalog.register(
            Table::new("t", Schema::new(vec![Column::new("n", DataType::Int64), Column::new("s", DataType::Text)]), rows).unwrap(),
        );
        let n = catalog.column_stats("t", "n").unwrap();
        let s = catalog.column_stats("t", "s").unwrap();
        let distinct_n: HashSet<i64> = values.iter().flatten().copied().collect();
        let distinct_s: HashSet<i64> = values.iter().flatten().map(|i| i % 7).collect();
        let nulls = values.iter().filter(|v| v.is_none()).count() as u64;
        prop_assert_eq!(n.row_count, values.len() as u64);
        prop_assert_eq!(n.distinct_count, distinct_n.len() as u64);
        prop_assert_eq!(s.distinct_count, distinct_s.len() as u64);
        prop_assert_eq!((n.null_count, s.null_count), (nulls, nulls));
        let non_null = values.len() as u64 - nulls;
        if non_null > 0 {
            prop_assert!((s.avg_text_length - 2.0).abs() < 1e-9);
        }
    }
}

#[test]
fn distinct_count_at_ten_thousand_rows() {
    let rows: Vec<Vec<Value>> = (0..10_000).map(|i| vec![Value::Int((i * 7919) % 3001)]).collect();
    let naive: HashSet<i64> = (0..10_000i64).map(|i| (i * 7919) % 3001).collect();
    let catalog = Catalog::new();
    catalog.register(Table::new("big", Schema::new(vec![Column::new("v", DataType::Int64)]), rows).unwrap());
    assert_eq!(catalog.column_stats("big", "v").unwrap().distinct_count, naive.len() as u64);
}

#[test]
fn inferred_types_follow_the_preference_order() {
    let t = read_csv("i,f,b,s\n1,1.5,true,x\n2,,FALSE,3\n,3,,\n".as_bytes(), "t", None).unwrap();
    let types: Vec<DataType> = t.schema().columns.iter().map(|c| c.ty).collect();
    assert_eq!(types, vec![DataType::Int64, DataType::Float64, DataType::Bool, DataType::Text]);
    assert_eq!(t.rows()[2], vec![Value::Null, Value::Float(3.0), Value::Null, Value::Null]);
}
