//! Typed access to domain entities on top of the raw [`Store`].

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use semver::Version;
use serde::de::DeserializeOwned;
use serde::Serialize;

use dress_core::assessment::{Organization, ScanRecord, ScanSession, UseCase};
use dress_core::doc;
use dress_core::insights::{FeedbackEntry, ScanFacts};
use dress_core::question_bank::{load_bank, LoadMode, QuestionBank};
use dress_core::risk_register::Register;
use dress_core::scoring::{score_many, AnswerWeights, PrincipleMap};

use crate::backend::MemoryBackend;
use crate::store::{Clock, EntityKind, Snapshot, Store, StoreError, StoreOptions, Validator};

const MAX_RETRIES: usize = 16;

fn check_as<T: DeserializeOwned>(payload: &str) -> Result<(), String> {
    serde_json::from_str::<T>(payload).map(|_| ()).map_err(|e| e.to_string())
}

/// Rejects payloads that do not decode as the entity their kind names.
pub fn domain_validator() -> Validator {
    Arc::new(|kind, payload| match kind {
        EntityKind::Bank => load_bank(payload, LoadMode::Lenient).map(|_| ()).map_err(|e| e.to_string()),
        EntityKind::Organization => check_as::<Organization>(payload),
        EntityKind::UseCase => check_as::<UseCase>(payload),
        EntityKind::Scan => check_as::<ScanSession>(payload),
        EntityKind::Register => check_as::<Register>(payload),
        EntityKind::PrincipleMap => check_as::<PrincipleMap>(payload),
        EntityKind::Feedback => check_as::<FeedbackEntry>(payload),
        EntityKind::Meta => check_as::<serde_json::Map<String, serde_json::Value>>(payload),
    })
}

#[derive(Debug, Clone)]
pub struct Repository {
    store: Arc<Store>,
}

impl Repository {
    pub fn new(store: Arc<Store>) -> Self {
        Repository { store }
    }

    pub fn open(path: impl AsRef<Path>, read_only: bool, clock: Option<Clock>) -> Result<Self, StoreError> {
        let mut options = StoreOptions {
            read_only,
            validator: Some(domain_validator()),
            ..Default::default()
        };
        if let Some(c) = clock {
            options.clock = c;
        }
        Ok(Repository::new(Arc::new(Store::open(path, options)?)))
    }

    pub fn in_memory(clock: Option<Clock>) -> Self {
        let mut options = StoreOptions {
            validator: Some(domain_validator()),
            ..Default::default()
        };
        if let Some(c) = clock {
            options.clock = c;
        }
        let store = Store::with_backend(Box::new(MemoryBackend::new()), options).expect("empty memory log opens");
        Repository::new(Arc::new(store))
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn now(&self) -> dress_core::Timestamp {
        self.store.now()
    }

    pub fn view(&self, as_of: Option<dress_core::Timestamp>) -> View {
        View {
            snap: self.store.snapshot(as_of),
        }
    }

    pub fn put<T: Serialize>(&self, kind: EntityKind, id: &str, expected: u64, value: &T) -> Result<u64, StoreError> {
        let payload = doc::to_canonical(value).map_err(|e| StoreError::PayloadInvalid(e.to_string()))?;
        self.store.put(kind, id, expected, &payload)
    }

    /// Read-modify-write with optimistic retry. `f` sees the current value
    /// (or `None`) and returns the value to store; it may run more than once
    /// if another writer gets in between.
    pub fn update<T, E>(&self, kind: EntityKind, id: &str, mut f: impl FnMut(Option<T>) -> Result<T, E>) -> Result<(T, u64), E>
    where
        T: Serialize + DeserializeOwned,
        E: From<StoreError>,
    {
        for _ in 0..MAX_RETRIES {
            let current = self.view(None).get::<T>(kind, id)?;
            let expected = current.as_ref().map_or(0, |(_, v)| *v);
            let next = f(current.map(|(t, _)| t))?;
            match self.put(kind, id, expected, &next) {
                Ok(v) => return Ok((next, v)),
                Err(StoreError::VersionConflict { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
        }
        let current = self.store.current_version(kind, id);
        Err(StoreError::VersionConflict { current }.into())
    }

    /// Next sequential id such as `org-0001`.
    pub fn next_id(&self, prefix: &str) -> Result<String, StoreError> {
        let key = format!("seq-{prefix}");
        let (counter, _) = self.update::<BTreeMap<String, u64>, StoreError>(EntityKind::Meta, &key, |cur| {
            let mut m = cur.unwrap_or_default();
            *m.entry("next".into()).or_insert(0) += 1;
            Ok(m)
        })?;
        Ok(format!("{prefix}-{:04}", counter["next"]))
    }
}

/// Read-only, point-in-time view of the repository.
#[derive(Debug, Clone)]
pub struct View {
    snap: Snapshot,
}

impl View {
    pub fn snapshot(&self) -> &Snapshot {
        &self.snap
    }

    pub fn get<T: DeserializeOwned>(&self, kind: EntityKind, id: &str) -> Result<Option<(T, u64)>, StoreError> {
        match self.snap.get(kind, id, None) {
            Ok(r) => serde_json::from_str(&r.payload)
                .map(|t| Some((t, r.version)))
                .map_err(|e| StoreError::Corrupt(format!("{kind} `{id}`: {e}"))),
            Err(StoreError::NotFound { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn require<T: DeserializeOwned>(&self, kind: EntityKind, id: &str) -> Result<(T, u64), StoreError> {
        self.get(kind, id)?.ok_or_else(|| StoreError::NotFound {
            kind,
            id: id.to_string(),
            version: None,
        })
    }

    /// Latest value of every entity of `kind`, by ascending id.
    pub fn list<T: DeserializeOwned>(&self, kind: EntityKind) -> Result<Vec<T>, StoreError> {
        self.snap
            .scan_keys(kind, |_| true)
            .into_iter()
            .map(|id| self.require::<T>(kind, &id).map(|(t, _)| t))
            .collect()
    }

    /// A bank by id; the latest version unless `version` names one.
    pub fn bank(&self, bank_id: &str, version: Option<&Version>) -> Result<QuestionBank, StoreError> {
        let history = self.snap.history(EntityKind::Bank, bank_id);
        let decode = |payload: &str| {
            load_bank(payload, LoadMode::Lenient).map_err(|e| StoreError::Corrupt(format!("bank `{bank_id}`: {e}")))
        };
        let not_found = || StoreError::NotFound {
            kind: EntityKind::Bank,
            id: match version {
                Some(v) => format!("{bank_id}@{v}"),
                None => bank_id.to_string(),
            },
            version: None,
        };
        match version {
            None => decode(&history.last().ok_or_else(not_found)?.payload),
            Some(v) => {
                for r in history.iter().rev() {
                    let b = decode(&r.payload)?;
                    if b.version() == v {
                        return Ok(b);
                    }
                }
                Err(not_found())
            }
        }
    }

    /// Every scan, open or closed.
    pub fn scan_sessions(&self) -> Result<Vec<ScanSession>, StoreError> {
        self.list(EntityKind::Scan)
    }

    pub fn closed_scans(&self) -> Result<Vec<ScanRecord>, StoreError> {
        Ok(self
            .scan_sessions()?
            .into_iter()
            .filter_map(|s| ScanRecord::try_from(s).ok())
            .collect())
    }

    pub fn closed_scans_of(&self, uc_id: &str) -> Result<Vec<ScanRecord>, StoreError> {
        Ok(self.closed_scans()?.into_iter().filter(|r| r.uc_id() == uc_id).collect())
    }

    /// Closed scans joined with their organization and use-case attributes
    /// and scored, ready for cohort statistics. Scans whose use-case or
    /// organization is missing are skipped.
    pub fn scan_facts(&self, weights: &AnswerWeights) -> Result<Vec<ScanFacts>, StoreError> {
        let records = self.closed_scans()?;
        let use_cases: BTreeMap<String, UseCase> = self
            .list::<UseCase>(EntityKind::UseCase)?
            .into_iter()
            .map(|u| (u.uc_id.clone(), u))
            .collect();
        let orgs: BTreeMap<String, Organization> = self
            .list::<Organization>(EntityKind::Organization)?
            .into_iter()
            .map(|o| (o.org_id.clone(), o))
            .collect();
        let profiles = score_many(&records, weights);
        Ok(profiles
            .into_iter()
            .filter_map(|profile| {
                let uc = use_cases.get(&profile.uc_id)?;
                let org = orgs.get(&uc.org_id)?;
                Some(ScanFacts {
                    org_id: org.org_id.clone(),
                    sector: org.sector.clone(),
                    size_band: org.size_band,
                    lifecycle_phase: uc.lifecycle_phase(),
                    profile,
                })
            })
            .collect())
    }

    pub fn export_all(&self) -> String {
        self.snap.export_all()
    }
}
