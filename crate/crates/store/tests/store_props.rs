use std::collections::BTreeMap;
use std::sync::{Arc, Barrier};

use proptest::prelude::*;
use serde_json::{json, Value};

use dress_store::backend::{FailingBackend, MemoryBackend};
use dress_store::{EntityKind, Store, StoreOptions};

fn mem_store() -> (MemoryBackend, Store) {
    let b = MemoryBackend::new();
    let s = Store::with_backend(Box::new(b.clone()), StoreOptions::default()).unwrap();
    (b, s)
}

fn doc_strategy() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::from),
        any::<i64>().prop_map(Value::from),
        (-1e9f64..1e9).prop_map(Value::from),
        "[ -~éü\\n\"]{0,12}".prop_map(Value::from),
    ];
    let value = leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::from),
            prop::collection::btree_map("[a-z]{1,6}", inner, 0..4)
                .prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    });
    prop::collection::btree_map("[a-zA-Z_]{1,8}", value, 0..5)
        .prop_map(|m| dress_core::doc::canonicalize(&Value::Object(m.into_iter().collect())))
}

fn kind_strategy() -> impl Strategy<Value = EntityKind> {
    prop::sample::select(EntityKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip_and_versions(ops in prop::collection::vec((kind_strategy(), 0u8..4, doc_strategy()), 1..40)) {
        let (backend, store) = mem_store();
        let mut model: BTreeMap<(EntityKind, String), Vec<String>> = BTreeMap::new();
        for (kind, id, payload) in &ops {
            let id = format!("id-{id}");
            let hist = model.entry((*kind, id.clone())).or_default();
            let v = store.put(*kind, &id, hist.len() as u64, payload).unwrap();
            hist.push(payload.clone());
            prop_assert_eq!(v, hist.len() as u64);
        }
        let check = |store: &Store| -> Result<(), TestCaseError> {
            for ((kind, id), hist) in &model {
                for (i, p) in hist.iter().enumerate() {
                    let r = store.get(*kind, id, Some(i as u64 + 1)).unwrap();
                    prop_assert_eq!(&r.payload, p);
                    prop_assert_eq!(r.version, i as u64 + 1);
                }
                prop_assert_eq!(&store.get(*kind, id, None).unwrap().payload, hist.last().unwrap());
            }
            Ok(())
        };
        check(&store)?;
        drop(store);
        let reopened = Store::with_backend(Box::new(backend), StoreOptions::default()).unwrap();
        check(&reopened)?;
        for kind in EntityKind::ALL {
            let want: Vec<String> = model.keys().filter(|(k, _)| *k == kind).map(|(_, id)| id.clone()).collect();
            prop_assert_eq!(reopened.scan_keys(kind), want);
        }
    }

    /// Cut the write at every possible byte: the store either has the new
    /// version or it does not, before and after reopening.
    #[test]
    fn put_is_all_or_nothing(payload in doc_strategy(), cut in 0usize..200) {
        let inner = MemoryBackend::new();
        let failing = FailingBackend::new(inner.clone()).failing_truncate();
        let budget = failing.budget_handle();
        let store = Store::with_backend(Box::new(failing), StoreOptions::default()).unwrap();
        store.put(EntityKind::Meta, "k", 0, "{\"first\":true}\n").unwrap();
        *budget.lock() = Some(cut);
        let outcome = store.put(EntityKind::Meta, "k", 1, &payload);
        drop(store);
        let reopened = Store::with_backend(Box::new(inner), StoreOptions::default()).unwrap();
        match outcome {
            Ok(v) => {
                prop_assert_eq!(v, 2);
                prop_assert_eq!(&reopened.get(EntityKind::Meta, "k", None).unwrap().payload, &payload);
            }
            Err(e) => {
                prop_assert_eq!(e.code(), "Io");
                prop_assert_eq!(reopened.current_version(EntityKind::Meta, "k"), 1);
                prop_assert_eq!(&reopened.get(EntityKind::Meta, "k", None).unwrap().payload, "{\"first\":true}\n");
            }
        }
    }
}

#[test]
fn concurrent_conflicting_puts_have_one_winner() {
    for round in 0..50 {
        let (_, store) = mem_store();
        let store = Arc::new(store);
        let n = 8;
        let barrier = Arc::new(Barrier::new(n));
        let handles: Vec<_> = (0..n)
            .map(|i| {
                let store = Arc::clone(&store);
                let barrier = Arc::clone(&barrier);
                std::thread::spawn(move || {
                    barrier.wait();
                    store.put(EntityKind::Scan, "contended", 0, &format!("{{\"writer\":{i}}}\n"))
                })
            })
            .collect();
        let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        let wins = results.iter().filter(|r| r.is_ok()).count();
        assert_eq!(wins, 1, "round {round}");
        assert!(results
            .iter()
            .filter_map(|r| r.as_ref().err())
            .all(|e| e.code() == "VersionConflict"));
        assert_eq!(store.current_version(EntityKind::Scan, "contended"), 1);
    }
}

#[test]
fn file_store_survives_reopen_and_torn_tail() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.dress");
    {
        let s = Store::open(&path, StoreOptions::default()).unwrap();
        s.put(EntityKind::Organization, "o1", 0, "{\"n\":1}\n").unwrap();
        s.put(EntityKind::Organization, "o1", 1, "{\"n\":2}\n").unwrap();
    }
    let good = std::fs::metadata(&path).unwrap().len();
    // simulate a crash in the middle of a frame
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.extend_from_slice(&[40, 0, 0, 0, 1, 2, 3, 4, b'{', b'"']);
    std::fs::write(&path, bytes).unwrap();

    let s = Store::open(&path, StoreOptions::default()).unwrap();
    assert_eq!(s.recovered_bytes(), 10);
    assert_eq!(std::fs::metadata(&path).unwrap().len(), good);
    assert_eq!(s.get(EntityKind::Organization, "o1", None).unwrap().payload, "{\"n\":2}\n");
    assert_eq!(&std::fs::read(&path).unwrap()[..8], dress_store::MAGIC);
}

#[test]
fn export_contains_every_version() {
    let (_, s) = mem_store();
    s.put(EntityKind::Bank, "b", 0, "{\"v\":1}\n").unwrap();
    s.put(EntityKind::Bank, "b", 1, "{\"v\":2}\n").unwrap();
    s.put(EntityKind::Organization, "o", 0, "{\"x\":[1,2]}\n").unwrap();
    let out = s.snapshot(None).export_all();
    assert!(dress_core::doc::is_canonical_object(&out));
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["format"], "dress-export/1");
    assert_eq!(v["records"].as_array().unwrap().len(), 3);
    assert_eq!(v["records"][1]["payload"], json!({"v": 2}));
}
