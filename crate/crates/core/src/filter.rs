//! Cloud-side global filter: the registry of uploaded one-class models,
//! minimum-dissimilarity attribution and the Guard's share/block rule.

use std::fmt;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::autoencoder::{AutoencoderParams, FeatureVector, Scratch};
use crate::error::{check_len, Error, Result};
use crate::trainer::{PrivacyProfile, TrainedUserModel};

/// Separates an owner id from a class suffix in an entry id (`alice#pets`).
pub const OWNER_SEPARATOR: char = '#';

/// The owner of a registry entry: the entry id up to the first `#`.
pub fn owner_of(entry_id: &str) -> &str {
    entry_id
        .split_once(OWNER_SEPARATOR)
        .map_or(entry_id, |(owner, _)| owner)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistryEntry {
    pub model: TrainedUserModel,
}

impl RegistryEntry {
    pub fn user_id(&self) -> &str {
        &self.model.user_id
    }

    pub fn owner(&self) -> &str {
        owner_of(&self.model.user_id)
    }

    pub fn params(&self) -> &AutoencoderParams {
        &self.model.params
    }

    pub fn profile(&self) -> &PrivacyProfile {
        &self.model.profile
    }
}

/// Ordered collection of registered one-class models.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterRegistry {
    entries: Vec<RegistryEntry>,
}

/// The confidence multiplier of the privacy interval, restricted to `[1, 2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuardConfig {
    alpha: f64,
}

impl GuardConfig {
    pub const MIN_ALPHA: f64 = 1.0;
    pub const MAX_ALPHA: f64 = 2.0;

    pub fn new(alpha: f64) -> Result<Self> {
        if !(Self::MIN_ALPHA..=Self::MAX_ALPHA).contains(&alpha) {
            return Err(Error::contract(format!("alpha {alpha} outside [1, 2]")));
        }
        Ok(GuardConfig { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Default for GuardConfig {
    fn default() -> Self {
        GuardConfig { alpha: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Share,
    Block,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Share => "share",
            Action::Block => "block",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: Action,
    pub attributed_user: Option<String>,
    pub min_dissimilarity: Option<f64>,
    pub in_interval: bool,
}

/// Dissimilarity of a probe under one registered model.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScore {
    pub index: usize,
    pub user_id: String,
    pub dissimilarity: f64,
}

impl FilterRegistry {
    pub fn new() -> Self {
        FilterRegistry::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn get(&self, user_id: &str) -> Option<&RegistryEntry> {
        self.entries.iter().find(|e| e.user_id() == user_id)
    }

    pub fn position(&self, user_id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.user_id() == user_id)
    }

    /// Feature dimension shared by every entry, if any are registered.
    pub fn input_dim(&self) -> Option<usize> {
        self.entries.first().map(|e| e.params().input_dim())
    }

    /// Appends `model`; existing entries are never touched.
    pub fn register_user(&mut self, model: TrainedUserModel) -> Result<()> {
        if self.get(&model.user_id).is_some() {
            return Err(Error::DuplicateUser(model.user_id));
        }
        if let Some(d) = self.input_dim() {
            check_len("registered model", d, model.params.input_dim())?;
        }
        if model.training_size == 0 {
            return Err(Error::contract("training_size must be at least 1"));
        }
        self.entries.push(RegistryEntry { model });
        Ok(())
    }

    pub fn score_all(&self, x: &FeatureVector) -> Result<Vec<ClassScore>> {
        let d = self.input_dim().ok_or(Error::EmptyRegistry)?;
        check_len("probe", d, x.len())?;
        Ok(self
            .entries
            .iter()
            .enumerate()
            .map(|(index, e)| {
                let p = e.params();
                let mut scratch = Scratch::new(p.input_dim(), p.latent_dim());
                ClassScore {
                    index,
                    user_id: e.user_id().to_string(),
                    dissimilarity: p.score_slice(x.as_slice(), &mut scratch),
                }
            })
            .collect())
    }

    /// Guard-gated share/block decision for a probe uploaded by `uploader`.
    pub fn filter_image(
        &self,
        guard: &GuardConfig,
        uploader: Option<&str>,
        x: &FeatureVector,
    ) -> Result<Decision> {
        let scores = self.score_all(x)?;
        let best = argmin_class(&scores)?;
        let entry = &self.entries[best.index];
        let uploader_owns = uploader.is_some_and(|u| u == entry.owner());
        let (action, in_interval) =
            guard_decide(entry.profile(), best.dissimilarity, guard, uploader_owns);
        Ok(Decision {
            action,
            attributed_user: Some(best.user_id.clone()),
            min_dissimilarity: Some(best.dissimilarity),
            in_interval,
        })
    }

    /// Registry position of the best-reconstructing model, ignoring the Guard.
    pub fn classify_index(&self, x: &FeatureVector) -> Result<usize> {
        let scores = self.score_all(x)?;
        argmin_class(&scores).map(|s| s.index)
    }

    pub fn classify_label(&self, x: &FeatureVector) -> Result<String> {
        let i = self.classify_index(x)?;
        Ok(self.entries[i].user_id().to_string())
    }
}

/// Smallest dissimilarity; ties go to the earliest registered entry.
pub fn argmin_class(scores: &[ClassScore]) -> Result<&ClassScore> {
    let mut iter = scores.iter();
    let mut best = iter.next().ok_or(Error::EmptyRegistry)?;
    for s in iter {
        if s.dissimilarity < best.dissimilarity {
            best = s;
        }
    }
    Ok(best)
}

/// Returns the action and whether `min_d` fell inside the privacy interval.
pub fn guard_decide(
    profile: &PrivacyProfile,
    min_d: f64,
    guard: &GuardConfig,
    uploader_owns: bool,
) -> (Action, bool) {
    let (lo, hi) = profile.interval(guard.alpha());
    let in_interval = lo <= min_d && min_d <= hi;
    let action = if uploader_owns || !in_interval {
        Action::Share
    } else {
        Action::Block
    };
    (action, in_interval)
}

/// A registry shared between many readers and occasional writers.
///
/// Readers hold the lock for a whole decision, so a registration is never
/// observed halfway through one.
#[derive(Debug, Clone, Default)]
pub struct SharedRegistry {
    inner: Arc<RwLock<FilterRegistry>>,
}

impl SharedRegistry {
    pub fn new(registry: FilterRegistry) -> Self {
        SharedRegistry {
            inner: Arc::new(RwLock::new(registry)),
        }
    }

    pub fn register_user(&self, model: TrainedUserModel) -> Result<()> {
        self.inner
            .write()
            .expect("registry lock poisoned")
            .register_user(model)
    }

    pub fn filter_image(
        &self,
        guard: &GuardConfig,
        uploader: Option<&str>,
        x: &FeatureVector,
    ) -> Result<Decision> {
        self.inner
            .read()
            .expect("registry lock poisoned")
            .filter_image(guard, uploader, x)
    }

    pub fn snapshot(&self) -> FilterRegistry {
        self.inner.read().expect("registry lock poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("registry lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(id: &str, b_prime: f64, d: usize, profile: PrivacyProfile) -> TrainedUserModel {
        let params = AutoencoderParams::new(
            d,
            1,
            vec![0.0; d],
            vec![0.0],
            vec![0.0; d],
            vec![b_prime; d],
        )
        .unwrap();
        TrainedUserModel {
            user_id: id.into(),
            params,
            profile,
            training_size: 1,
        }
    }

    fn two_users(d: usize) -> FilterRegistry {
        let mut r = FilterRegistry::new();
        r.register_user(model(
            "user0",
            0.0,
            d,
            PrivacyProfile::new(0.0, 0.1).unwrap(),
        ))
        .unwrap();
        r.register_user(model(
            "user1",
            100.0,
            d,
            PrivacyProfile::new(0.0, 0.01).unwrap(),
        ))
        .unwrap();
        r
    }

    fn fv(v: f64, d: usize) -> FeatureVector {
        FeatureVector::new(vec![v; d]).unwrap()
    }

    fn score(id: &str, index: usize, d: f64) -> ClassScore {
        ClassScore {
            index,
            user_id: id.into(),
            dissimilarity: d,
        }
    }

    #[test]
    fn registration() {
        let mut r = FilterRegistry::new();
        let p = PrivacyProfile::new(1.0, 0.1).unwrap();
        r.register_user(model("a", 0.0, 4, p)).unwrap();
        assert_eq!(r.len(), 1);
        let before = r.clone();
        assert!(matches!(
            r.register_user(model("a", 1.0, 4, p)),
            Err(Error::DuplicateUser(_))
        ));
        assert_eq!(r, before);
        assert!(matches!(
            r.register_user(model("b", 0.0, 5, p)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert_eq!(r, before);
    }

    #[test]
    fn scoring_examples() {
        let d = 6;
        let r = two_users(d);
        let s = r.score_all(&fv(0.5, d)).unwrap();
        assert_eq!(s[0].dissimilarity, 0.0);
        let s = r.score_all(&fv(1.0, d)).unwrap();
        assert!((s[0].dissimilarity - d as f64 * 0.25).abs() < 1e-15);
        assert!(s[1].dissimilarity < 1e-12);
        assert_eq!(s[0].user_id, "user0");
        assert!(matches!(
            FilterRegistry::new().score_all(&fv(1.0, d)),
            Err(Error::EmptyRegistry)
        ));
        assert!(r.score_all(&fv(1.0, d + 1)).is_err());
    }

    #[test]
    fn argmin_examples() {
        let s = [score("A", 0, 0.2), score("B", 1, 0.1)];
        assert_eq!(argmin_class(&s).unwrap().user_id, "B");
        let s = [score("A", 0, 0.1), score("B", 1, 0.1)];
        assert_eq!(argmin_class(&s).unwrap().user_id, "A");
        assert_eq!(argmin_class(&s[..1]).unwrap().user_id, "A");
        assert!(argmin_class(&[]).is_err());
    }

    #[test]
    fn guard_examples() {
        let p = PrivacyProfile::new(1.0, 0.1).unwrap();
        let g = GuardConfig::new(2.0).unwrap();
        assert_eq!(guard_decide(&p, 1.1, &g, false), (Action::Block, true));
        assert_eq!(guard_decide(&p, 0.5, &g, false), (Action::Share, false));
        assert_eq!(guard_decide(&p, 1.1, &g, true), (Action::Share, true));
        assert!(GuardConfig::new(0.99).is_err());
        assert!(GuardConfig::new(2.01).is_err());
        assert!(GuardConfig::new(f64::NAN).is_err());
    }

    #[test]
    fn filter_examples() {
        let d = 6;
        let r = two_users(d);
        let g = GuardConfig::default();
        let x = fv(1.0, d);
        let dec = r.filter_image(&g, Some("user0"), &x).unwrap();
        assert_eq!(dec.action, Action::Block);
        assert_eq!(dec.attributed_user.as_deref(), Some("user1"));
        assert!(dec.in_interval);
        let dec = r.filter_image(&g, Some("user1"), &x).unwrap();
        assert_eq!(dec.action, Action::Share);
        let dec = r.filter_image(&g, None, &x).unwrap();
        assert_eq!(dec.action, Action::Block);
        assert!(matches!(
            FilterRegistry::new().filter_image(&g, None, &x),
            Err(Error::EmptyRegistry)
        ));
    }

    #[test]
    fn classify_examples() {
        let d = 3;
        let r = two_users(d);
        assert_eq!(r.classify_label(&fv(0.5, d)).unwrap(), "user0");
        assert_eq!(r.classify_label(&fv(1.0, d)).unwrap(), "user1");
    }

    #[test]
    fn owner_suffix_shares_own_classes() {
        assert_eq!(owner_of("alice#pets"), "alice");
        assert_eq!(owner_of("bob"), "bob");
        let mut r = FilterRegistry::new();
        let p = PrivacyProfile::new(0.0, 0.01).unwrap();
        r.register_user(model("alice#face", 100.0, 4, p)).unwrap();
        let dec = r
            .filter_image(&GuardConfig::default(), Some("alice"), &fv(1.0, 4))
            .unwrap();
        assert_eq!(dec.action, Action::Share);
        assert_eq!(dec.attributed_user.as_deref(), Some("alice#face"));
    }

    #[test]
    fn extreme_probes_decide() {
        let r = two_users(5);
        let g = GuardConfig::new(1.0).unwrap();
        for v in [0.0, 1.0] {
            assert!(r.filter_image(&g, None, &fv(v, 5)).is_ok());
        }
    }
}
