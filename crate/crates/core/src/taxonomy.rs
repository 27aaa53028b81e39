//! Fixed vocabularies shared by every other module: the eight risks, four
//! pitfalls, four fundamentals, eight respondent roles, the answer options
//! and the AI lifecycle stages.
//!
//! The enum members are compiled in. Everything descriptive about them
//! (labels, rights, aliases, the pitfall to stage table) lives in
//! `data/taxonomy.toml`, which is embedded at build time and can be replaced
//! at runtime with [`Taxonomy::from_toml_str`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEFAULT_TAXONOMY: &str = include_str!("../data/taxonomy.toml");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaxonomyError {
    #[error("unknown tag `{0}`")]
    UnknownTag(String),
    #[error("alias `{alias}` normalizes to `{key}`, already taken by {existing}")]
    AmbiguousTag {
        alias: String,
        key: String,
        existing: String,
    },
    #[error("taxonomy file: {0}")]
    Malformed(String),
}

impl TaxonomyError {
    pub fn code(&self) -> &'static str {
        match self {
            TaxonomyError::UnknownTag(_) => "UnknownTag",
            TaxonomyError::AmbiguousTag { .. } => "AmbiguousTag",
            TaxonomyError::Malformed(_) => "TaxonomyMalformed",
        }
    }
}

macro_rules! vocabulary {
    (
        $(#[$meta:meta])*
        $name:ident, $kind:literal { $($variant:ident),+ $(,)? }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            /// Canonical id, identical to the serialized form.
            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => stringify!($variant)),+
                }
            }

            pub const KIND: &'static str = $kind;
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = TaxonomyError;

            fn from_str(label: &str) -> Result<Self, Self::Err> {
                match parse_tag(label)? {
                    TagRef::$name(v) => Ok(v),
                    _ => Err(TaxonomyError::UnknownTag(label.to_string())),
                }
            }
        }

        impl From<$name> for TagRef {
            fn from(v: $name) -> TagRef {
                TagRef::$name(v)
            }
        }
    };
}

vocabulary! {
    /// Rights-backed harm categories a scenario or mitigation can be tagged to.
    Risk, "risk" {
        PrivacyIntrusion,
        AmplifiedDiscrimination,
        ViolationOfAutonomy,
        SocialExclusion,
        HarmToSafety,
        HarmToSecurityOfInformation,
        MisAndDisinformation,
        PreventionOfPublicServiceAccess,
    }
}

vocabulary! {
    /// Root-cause categories; every scan question carries exactly one.
    Pitfall, "pitfall" {
        MisuseOveruseOfData,
        BiasOfTheCreator,
        ImmatureDataAndAI,
        DataBias,
    }
}

vocabulary! {
    /// Organizational prerequisites the scan measures achievement against.
    Fundamental, "fundamental" {
        Accountability,
        Governance,
        Explainability,
        Transparency,
    }
}

vocabulary! {
    /// Organizational function expected to answer a question.
    Role, "role" {
        Technical,
        Legal,
        Risk,
        Compliance,
        Communications,
        CsrSustainability,
        BusinessOwner,
        HR,
    }
}

vocabulary! {
    LifecycleStage, "stage" {
        DataCollection,
        DesignAndBuild,
        TrainingAndValidation,
        DeploymentAndUse,
    }
}

impl LifecycleStage {
    /// Position in the lifecycle, 1-based.
    pub fn order(self) -> u8 {
        match self {
            LifecycleStage::DataCollection => 1,
            LifecycleStage::DesignAndBuild => 2,
            LifecycleStage::TrainingAndValidation => 3,
            LifecycleStage::DeploymentAndUse => 4,
        }
    }
}

impl Pitfall {
    pub fn lifecycle_stage(self) -> LifecycleStage {
        lifecycle_stage_of(self)
    }
}

/// Any member of one of the tag vocabularies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TagRef {
    Risk(Risk),
    Pitfall(Pitfall),
    Fundamental(Fundamental),
    Role(Role),
    LifecycleStage(LifecycleStage),
}

impl TagRef {
    pub fn canonical_name(self) -> &'static str {
        match self {
            TagRef::Risk(v) => v.as_str(),
            TagRef::Pitfall(v) => v.as_str(),
            TagRef::Fundamental(v) => v.as_str(),
            TagRef::Role(v) => v.as_str(),
            TagRef::LifecycleStage(v) => v.as_str(),
        }
    }

    pub fn kind(self) -> &'static str {
        match self {
            TagRef::Risk(_) => Risk::KIND,
            TagRef::Pitfall(_) => Pitfall::KIND,
            TagRef::Fundamental(_) => Fundamental::KIND,
            TagRef::Role(_) => Role::KIND,
            TagRef::LifecycleStage(_) => LifecycleStage::KIND,
        }
    }

    fn all() -> impl Iterator<Item = TagRef> {
        Risk::ALL
            .iter()
            .map(|&v| TagRef::from(v))
            .chain(Pitfall::ALL.iter().map(|&v| TagRef::from(v)))
            .chain(Fundamental::ALL.iter().map(|&v| TagRef::from(v)))
            .chain(Role::ALL.iter().map(|&v| TagRef::from(v)))
            .chain(LifecycleStage::ALL.iter().map(|&v| TagRef::from(v)))
    }
}

impl fmt::Display for TagRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}::{}", self.kind(), self.canonical_name())
    }
}

/// A response to a scan question. `Unanswered` is the initial state of every
/// askable question and can never be submitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Answer {
    Yes,
    InProgress,
    NotSure,
    No,
    #[default]
    Unanswered,
}

impl Answer {
    pub const ALL: &'static [Answer] = &[
        Answer::Yes,
        Answer::InProgress,
        Answer::NotSure,
        Answer::No,
        Answer::Unanswered,
    ];

    /// The four options a respondent can pick.
    pub const SUBMITTABLE: &'static [Answer] =
        &[Answer::No, Answer::NotSure, Answer::InProgress, Answer::Yes];

    pub fn as_str(self) -> &'static str {
        match self {
            Answer::Yes => "Yes",
            Answer::InProgress => "InProgress",
            Answer::NotSure => "NotSure",
            Answer::No => "No",
            Answer::Unanswered => "Unanswered",
        }
    }

    /// Position in No < NotSure < InProgress < Yes. `None` for Unanswered.
    pub fn rank(self) -> Option<u8> {
        match self {
            Answer::No => Some(0),
            Answer::NotSure => Some(1),
            Answer::InProgress => Some(2),
            Answer::Yes => Some(3),
            Answer::Unanswered => None,
        }
    }

    pub fn is_answered(self) -> bool {
        self != Answer::Unanswered
    }

    /// No or NotSure.
    pub fn is_flagged(self) -> bool {
        matches!(self, Answer::No | Answer::NotSure)
    }

    /// The next option up the ordering, if any.
    pub fn upgraded(self) -> Option<Answer> {
        match self {
            Answer::No => Some(Answer::NotSure),
            Answer::NotSure => Some(Answer::InProgress),
            Answer::InProgress => Some(Answer::Yes),
            Answer::Yes | Answer::Unanswered => None,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Answer {
    type Err = TaxonomyError;

    /// Accepts canonical ids as well as the respondent wording
    /// ("yes", "in-progress", "not sure", "no").
    fn from_str(label: &str) -> Result<Self, Self::Err> {
        match normalize(label).as_str() {
            "yes" => Ok(Answer::Yes),
            "inprogress" => Ok(Answer::InProgress),
            "notsure" => Ok(Answer::NotSure),
            "no" => Ok(Answer::No),
            "unanswered" => Ok(Answer::Unanswered),
            _ => Err(TaxonomyError::UnknownTag(label.to_string())),
        }
    }
}

/// Lowercase and drop every character that is not alphanumeric.
pub fn normalize(label: &str) -> String {
    label
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Descriptive metadata for one vocabulary member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TermInfo {
    pub id: String,
    pub label: String,
    pub description: String,
    pub right: Option<String>,
    pub aliases: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermRow {
    id: String,
    label: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    right: Option<String>,
    #[serde(default)]
    order: Option<u8>,
    #[serde(default)]
    aliases: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaxonomyFile {
    risk: Vec<TermRow>,
    pitfall: Vec<TermRow>,
    fundamental: Vec<TermRow>,
    role: Vec<TermRow>,
    stage: Vec<TermRow>,
    pitfall_stage: BTreeMap<String, String>,
}

/// Loaded vocabulary metadata plus the alias lookup table.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    terms: HashMap<TagRef, TermInfo>,
    lookup: HashMap<String, TagRef>,
    stages: BTreeMap<Pitfall, LifecycleStage>,
}

static DEFAULT: LazyLock<Taxonomy> = LazyLock::new(|| {
    Taxonomy::from_toml_str(DEFAULT_TAXONOMY).expect("embedded taxonomy is valid")
});

impl Taxonomy {
    /// The taxonomy embedded in the build.
    pub fn embedded() -> &'static Taxonomy {
        &DEFAULT
    }

    pub fn from_toml_str(source: &str) -> Result<Self, TaxonomyError> {
        let file: TaxonomyFile =
            toml::from_str(source).map_err(|e| TaxonomyError::Malformed(e.to_string()))?;

        let mut terms = HashMap::new();
        let sections: [(&str, &[TermRow]); 5] = [
            (Risk::KIND, &file.risk),
            (Pitfall::KIND, &file.pitfall),
            (Fundamental::KIND, &file.fundamental),
            (Role::KIND, &file.role),
            (LifecycleStage::KIND, &file.stage),
        ];
        for (kind, rows) in sections {
            for row in rows {
                let tag = TagRef::all()
                    .find(|t| t.kind() == kind && t.canonical_name() == row.id)
                    .ok_or_else(|| {
                        TaxonomyError::Malformed(format!("`{}` is not a {kind} id", row.id))
                    })?;
                if let TagRef::LifecycleStage(stage) = tag {
                    if row.order != Some(stage.order()) {
                        return Err(TaxonomyError::Malformed(format!(
                            "stage `{}` must declare order {}",
                            row.id,
                            stage.order()
                        )));
                    }
                }
                if row.label.trim().is_empty() {
                    return Err(TaxonomyError::Malformed(format!("`{}` has no label", row.id)));
                }
                if matches!(tag, TagRef::Risk(_))
                    && row.right.as_deref().is_none_or(|r| r.trim().is_empty())
                {
                    return Err(TaxonomyError::Malformed(format!(
                        "risk `{}` has no right label",
                        row.id
                    )));
                }
                let info = TermInfo {
                    id: row.id.clone(),
                    label: row.label.clone(),
                    description: row.description.clone(),
                    right: row.right.clone(),
                    aliases: row.aliases.clone(),
                };
                if terms.insert(tag, info).is_some() {
                    return Err(TaxonomyError::Malformed(format!("`{}` listed twice", row.id)));
                }
            }
        }
        if let Some(missing) = TagRef::all().find(|t| !terms.contains_key(t)) {
            return Err(TaxonomyError::Malformed(format!("missing entry for {missing}")));
        }

        let mut lookup: HashMap<String, TagRef> = HashMap::new();
        // Ids first so that a clashing alias is the one reported.
        let mut keyed: Vec<(String, TagRef)> = TagRef::all()
            .map(|t| (t.canonical_name().to_string(), t))
            .collect();
        for tag in TagRef::all() {
            keyed.extend(terms[&tag].aliases.iter().map(|a| (a.clone(), tag)));
            keyed.push((terms[&tag].label.clone(), tag));
        }
        for (alias, tag) in keyed {
            let key = normalize(&alias);
            if key.is_empty() {
                return Err(TaxonomyError::Malformed(format!("empty alias for {tag}")));
            }
            match lookup.get(&key) {
                Some(existing) if *existing != tag => {
                    return Err(TaxonomyError::AmbiguousTag {
                        alias,
                        key,
                        existing: existing.to_string(),
                    })
                }
                Some(_) => {}
                None => {
                    lookup.insert(key, tag);
                }
            }
        }

        let mut stages = BTreeMap::new();
        for (pitfall, stage) in &file.pitfall_stage {
            let p = match lookup.get(&normalize(pitfall)) {
                Some(TagRef::Pitfall(p)) => *p,
                _ => return Err(TaxonomyError::Malformed(format!("`{pitfall}` is not a pitfall"))),
            };
            let s = match lookup.get(&normalize(stage)) {
                Some(TagRef::LifecycleStage(s)) => *s,
                _ => return Err(TaxonomyError::Malformed(format!("`{stage}` is not a stage"))),
            };
            if stages.insert(p, s).is_some() {
                return Err(TaxonomyError::Malformed(format!("`{pitfall}` mapped twice")));
            }
        }
        if let Some(p) = Pitfall::ALL.iter().find(|p| !stages.contains_key(p)) {
            return Err(TaxonomyError::Malformed(format!("pitfall `{p}` has no stage")));
        }

        Ok(Taxonomy {
            terms,
            lookup,
            stages,
        })
    }

    pub fn parse_tag(&self, label: &str) -> Result<TagRef, TaxonomyError> {
        self.lookup
            .get(&normalize(label))
            .copied()
            .ok_or_else(|| TaxonomyError::UnknownTag(label.to_string()))
    }

    pub fn stage_of(&self, pitfall: Pitfall) -> LifecycleStage {
        self.stages[&pitfall]
    }

    pub fn info(&self, tag: impl Into<TagRef>) -> &TermInfo {
        &self.terms[&tag.into()]
    }

    pub fn label(&self, tag: impl Into<TagRef>) -> &str {
        &self.info(tag).label
    }
}

/// Resolve a free-form label against the embedded taxonomy.
pub fn parse_tag(label: &str) -> Result<TagRef, TaxonomyError> {
    Taxonomy::embedded().parse_tag(label)
}

/// Lifecycle stage a pitfall belongs to under the embedded mapping.
pub fn lifecycle_stage_of(pitfall: Pitfall) -> LifecycleStage {
    Taxonomy::embedded().stage_of(pitfall)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cardinalities() {
        assert_eq!(Risk::ALL.len(), 8);
        assert_eq!(Pitfall::ALL.len(), 4);
        assert_eq!(Fundamental::ALL.len(), 4);
        assert_eq!(Role::ALL.len(), 8);
        assert_eq!(LifecycleStage::ALL.len(), 4);
        assert_eq!(Answer::ALL.len(), 5);
        assert_eq!(Answer::SUBMITTABLE.len(), 4);
    }

    #[test]
    fn parses_labels_from_question_tables() {
        assert_eq!(parse_tag("Governance"), Ok(TagRef::Fundamental(Fundamental::Governance)));
        assert_eq!(parse_tag("governance"), Ok(TagRef::Fundamental(Fundamental::Governance)));
        assert_eq!(
            parse_tag("Misuse/Overuse"),
            Ok(TagRef::Pitfall(Pitfall::MisuseOveruseOfData))
        );
        assert_eq!("Immature Data/AI".parse(), Ok(Pitfall::ImmatureDataAndAI));
        assert_eq!("Bias of the creator".parse(), Ok(Pitfall::BiasOfTheCreator));
        assert_eq!("Data bias".parse(), Ok(Pitfall::DataBias));
        assert_eq!("TECH".parse(), Ok(Role::Technical));
        assert_eq!("CR/CSR".parse(), Ok(Role::CsrSustainability));
        assert_eq!("Product owner".parse(), Ok(Role::BusinessOwner));
        assert_eq!("Business owner".parse(), Ok(Role::BusinessOwner));
    }

    #[test]
    fn unknown_and_wrong_kind_labels_fail() {
        assert_eq!(
            parse_tag("Fairness"),
            Err(TaxonomyError::UnknownTag("Fairness".into()))
        );
        assert!("Governance".parse::<Pitfall>().is_err());
        assert!(parse_tag("").is_err());
        assert!(parse_tag("//").is_err());
    }

    #[test]
    fn canonical_names_round_trip() {
        for tag in TagRef::all() {
            assert_eq!(parse_tag(tag.canonical_name()), Ok(tag));
        }
    }

    #[test]
    fn shipped_stage_mapping() {
        assert_eq!(lifecycle_stage_of(Pitfall::DataBias), LifecycleStage::DataCollection);
        assert_eq!(lifecycle_stage_of(Pitfall::BiasOfTheCreator), LifecycleStage::DesignAndBuild);
        assert_eq!(
            lifecycle_stage_of(Pitfall::ImmatureDataAndAI),
            LifecycleStage::TrainingAndValidation
        );
        assert_eq!(
            lifecycle_stage_of(Pitfall::MisuseOveruseOfData),
            LifecycleStage::DeploymentAndUse
        );
    }

    #[test]
    fn every_risk_has_a_right() {
        let tax = Taxonomy::embedded();
        for &r in Risk::ALL {
            assert!(!tax.info(r).right.as_deref().unwrap_or("").is_empty());
        }
        assert_eq!(tax.info(Risk::PrivacyIntrusion).right.as_deref(), Some("Right to privacy"));
    }

    #[test]
    fn clashing_aliases_are_rejected() {
        let bad = DEFAULT_TAXONOMY.replace(
            "aliases = [\"Human resources\"]",
            "aliases = [\"Human resources\", \"tech\"]",
        );
        assert!(matches!(
            Taxonomy::from_toml_str(&bad),
            Err(TaxonomyError::AmbiguousTag { .. })
        ));
    }

    #[test]
    fn stage_table_can_be_revised_at_runtime() {
        let revised = DEFAULT_TAXONOMY.replace(
            "DataBias = \"DataCollection\"",
            "DataBias = \"TrainingAndValidation\"",
        );
        let tax = Taxonomy::from_toml_str(&revised).unwrap();
        assert_eq!(tax.stage_of(Pitfall::DataBias), LifecycleStage::TrainingAndValidation);
    }

    #[test]
    fn answer_vocabulary() {
        assert_eq!("yes".parse(), Ok(Answer::Yes));
        assert_eq!("in-progress".parse(), Ok(Answer::InProgress));
        assert_eq!("not sure".parse(), Ok(Answer::NotSure));
        assert_eq!("No".parse(), Ok(Answer::No));
        assert_eq!(Answer::default(), Answer::Unanswered);
        assert_eq!(Answer::No.upgraded(), Some(Answer::NotSure));
        assert_eq!(Answer::Yes.upgraded(), None);
        assert!(Answer::NotSure.rank() < Answer::InProgress.rank());
    }

    #[test]
    fn serializes_as_upper_camel_ids() {
        assert_eq!(serde_json::to_string(&Role::CsrSustainability).unwrap(), "\"CsrSustainability\"");
        assert_eq!(serde_json::to_string(&Answer::NotSure).unwrap(), "\"NotSure\"");
    }
}
