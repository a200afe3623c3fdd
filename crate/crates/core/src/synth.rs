//! Synthetic labeled review ecosystems.
//!
//! Genuine users follow one two-state HMM and spammers another. Spammers are
//! organised into groups; every group owns a few target restaurants and a
//! handful of burst windows, and each member posts a short run of
//! active-state reviews to the group's targets inside every window. A
//! fraction of spammers are raised accounts whose history opens with a
//! genuine-looking farming phase.
//!
//! None of the structural defaults (group sizes, burst counts, window
//! lengths) come from measured data; they are chosen so that the planted
//! structure is recoverable at desk scale.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::coburst::{csv_field, review_states_from_path};
use crate::datamodel::{Dataset, Label, Review};
use crate::exec::Execution;
use crate::hmm::{sample_sequence_with, HmmParams};
use crate::{Error, Result};

/// 2012-01-01T00:00:00Z.
pub const DEFAULT_START: i64 = 1_325_376_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CampaignConfig {
    pub targets_per_group: usize,
    pub burst_window_seconds: i64,
    pub bursts_per_group: usize,
    /// Active reviews each member posts inside every burst window.
    pub reviews_per_burst: usize,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            targets_per_group: 3,
            burst_window_seconds: 86_400,
            bursts_per_group: 3,
            reviews_per_burst: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_genuine: usize,
    pub n_spammers: usize,
    pub n_restaurants: usize,
    /// Mean number of reviews per user; actual counts are uniform on
    /// `[mean/2, 3*mean/2]`, at least 2.
    pub reviews_per_user: usize,
    pub params_pos: HmmParams,
    pub params_neg: HmmParams,
    /// Spammers are split round-robin over this many groups; 0 disables campaigns.
    pub n_groups: usize,
    pub campaign: CampaignConfig,
    pub raised_fraction: f64,
    /// Earliest first review.
    pub start_time: i64,
    /// Users start, and burst windows open, within this many seconds of `start_time`.
    pub horizon_seconds: i64,
    pub exec: Execution,
}

/// Spammer dynamics: active mode ~12 minutes, inactive ~24 days.
pub fn default_spam_params() -> HmmParams {
    HmmParams::from_switching(0.5, 0.35, 0.15, [1.0 / 2_073_600.0, 1.0 / 720.0])
        .expect("valid constants")
}

/// Genuine dynamics: both modes 2.5 times slower than the spam ones.
pub fn default_genuine_params() -> HmmParams {
    HmmParams::from_switching(0.3, 0.2, 0.3, [1.0 / 5_184_000.0, 1.0 / 1800.0])
        .expect("valid constants")
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_genuine: 1600,
            n_spammers: 400,
            n_restaurants: 200,
            reviews_per_user: 50,
            params_pos: default_spam_params(),
            params_neg: default_genuine_params(),
            n_groups: 4,
            campaign: CampaignConfig::default(),
            raised_fraction: 0.1,
            start_time: DEFAULT_START,
            horizon_seconds: 2 * 365 * 86_400,
            exec: Execution::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.n_genuine + self.n_spammers == 0 {
            return err("at least one user is required".into());
        }
        if self.n_restaurants == 0 {
            return err("at least one restaurant is required".into());
        }
        if self.reviews_per_user == 0 {
            return err("reviews_per_user must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.raised_fraction) {
            return err(format!(
                "raised_fraction must lie in [0, 1], got {}",
                self.raised_fraction
            ));
        }
        if self.start_time < 0 || self.horizon_seconds <= 0 {
            return err("start_time must be non-negative and horizon positive".into());
        }
        self.params_pos.validate()?;
        self.params_neg.validate()?;
        if self.n_groups > 0 && self.n_spammers > 0 {
            let c = &self.campaign;
            if c.targets_per_group == 0 || c.targets_per_group > self.n_restaurants {
                return err(format!(
                    "targets_per_group must lie in 1..={}, got {}",
                    self.n_restaurants, c.targets_per_group
                ));
            }
            if c.bursts_per_group == 0 || c.reviews_per_burst == 0 {
                return err("bursts_per_group and reviews_per_burst must be positive".into());
            }
            // every burst review needs its own second, with half the window as start jitter
            if c.burst_window_seconds < 2 * c.reviews_per_burst as i64 {
                return err(format!(
                    "burst window of {} s cannot hold {} reviews at 1 s spacing",
                    c.burst_window_seconds, c.reviews_per_burst
                ));
            }
        }
        Ok(())
    }
}

/// Targets and burst windows of one spam group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPlan {
    pub targets: Vec<String>,
    /// Window start times; each window spans `burst_window_seconds`.
    pub windows: Vec<i64>,
}

#[derive(Debug, Clone)]
pub struct SynthTruth {
    pub dataset: Dataset,
    /// Spammer → group id.
    pub groups: BTreeMap<String, usize>,
    pub raised: BTreeSet<String>,
    /// Aligned with `dataset.reviews()`.
    pub true_states: Vec<u8>,
    pub plans: Vec<GroupPlan>,
}

impl SynthTruth {
    /// `user_id,label,group_id,is_raised`, sorted by user id.
    pub fn write_users_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "user_id,label,group_id,is_raised")?;
        let labels = self.dataset.user_labels();
        for user in self.dataset.by_user().keys() {
            let label = labels.get(user).map(|l| l.as_str()).unwrap_or("");
            let group = self
                .groups
                .get(user)
                .map(|g| g.to_string())
                .unwrap_or_default();
            writeln!(
                w,
                "{},{label},{group},{}",
                csv_field(user),
                u8::from(self.raised.contains(user))
            )?;
        }
        Ok(())
    }

    /// `review_id,true_state` in canonical review order.
    pub fn write_states_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "review_id,true_state")?;
        for (r, s) in self.dataset.reviews().iter().zip(&self.true_states) {
            writeln!(w, "{},{s}", csv_field(&r.review_id))?;
        }
        Ok(())
    }

    pub fn user_labels(&self) -> BTreeMap<String, Label> {
        self.dataset.user_labels()
    }
}

#[derive(Debug, Clone, Copy)]
enum Role {
    Genuine,
    Spammer { group: Option<usize>, raised: bool },
}

struct UserPlan {
    id: String,
    role: Role,
}

fn user_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn restaurant_id(i: usize) -> String {
    format!("s{i:04}")
}

/// Turns sampled intervals into timestamps and per-review states.
fn timeline(t0: i64, deltas: &[f64], path: &[u8]) -> Vec<(i64, u8)> {
    let states = review_states_from_path(path);
    let mut t = t0;
    let mut out = Vec::with_capacity(deltas.len() + 1);
    out.push((t, states[0]));
    for (d, &s) in deltas.iter().zip(&states[1..]) {
        t += d.round() as i64;
        out.push((t, s));
    }
    out
}

/// Generates the dataset and its ground truth; deterministic in `cfg.seed`
/// and independent of `cfg.exec`.
pub fn gen_dataset(cfg: &SynthConfig) -> Result<SynthTruth> {
    cfg.validate()?;
    let n_users = cfg.n_genuine + cfg.n_spammers;
    let width = n_users.to_string().len().max(5);
    let campaigns = cfg.n_groups > 0 && cfg.n_spammers > 0;

    // stream 0 drives the shared plan; user i draws from stream i + 1
    let mut plan_rng = user_rng(cfg.seed, 0);
    let mut spam_order: Vec<usize> = (0..cfg.n_spammers).collect();
    spam_order.shuffle(&mut plan_rng);
    let n_raised = (cfg.raised_fraction * cfg.n_spammers as f64).round() as usize;
    let raised_set: BTreeSet<usize> = spam_order[..n_raised].iter().copied().collect();

    let plans: Vec<GroupPlan> = if campaigns {
        (0..cfg.n_groups)
            .map(|_| {
                let mut all: Vec<usize> = (0..cfg.n_restaurants).collect();
                all.shuffle(&mut plan_rng);
                let targets = all[..cfg.campaign.targets_per_group]
                    .iter()
                    .map(|&i| restaurant_id(i))
                    .collect();
                let windows = (0..cfg.campaign.bursts_per_group)
                    .map(|_| cfg.start_time + plan_rng.random_range(0..cfg.horizon_seconds))
                    .collect();
                GroupPlan { targets, windows }
            })
            .collect()
    } else {
        Vec::new()
    };

    let users: Vec<UserPlan> = (0..n_users)
        .map(|i| {
            let role = if i < cfg.n_genuine {
                Role::Genuine
            } else {
                let s = i - cfg.n_genuine;
                Role::Spammer {
                    group: campaigns.then(|| s % cfg.n_groups),
                    raised: raised_set.contains(&s),
                }
            };
            UserPlan {
                id: format!("u{i:0width$}"),
                role,
            }
        })
        .collect();

    let per_user: Vec<Result<Vec<(Review, u8)>>> = cfg.exec.map_range(n_users, |i| {
        generate_user(cfg, &users[i], &plans, user_rng(cfg.seed, i as u64 + 1))
    });

    let mut reviews = Vec::new();
    let mut states: HashMap<String, u8> = HashMap::new();
    for rows in per_user {
        for (r, s) in rows? {
            states.insert(r.review_id.clone(), s);
            reviews.push(r);
        }
    }
    let dataset = Dataset::from_reviews(reviews)?;
    let true_states = dataset
        .reviews()
        .iter()
        .map(|r| states[&r.review_id])
        .collect();
    let mut groups = BTreeMap::new();
    let mut raised = BTreeSet::new();
    for u in &users {
        if let Role::Spammer {
            group,
            raised: is_raised,
        } = u.role
        {
            if let Some(g) = group {
                groups.insert(u.id.clone(), g);
            }
            if is_raised {
                raised.insert(u.id.clone());
            }
        }
    }
    Ok(SynthTruth {
        dataset,
        groups,
        raised,
        true_states,
        plans,
    })
}

fn generate_user(
    cfg: &SynthConfig,
    user: &UserPlan,
    plans: &[GroupPlan],
    mut rng: ChaCha8Rng,
) -> Result<Vec<(Review, u8)>> {
    let mean = cfg.reviews_per_user;
    let n_reviews = rng.random_range(mean / 2..=mean + mean / 2).max(2);
    let t0 = cfg.start_time + rng.random_range(0..cfg.horizon_seconds / 4 + 1);

    let mut events: Vec<(i64, u8, Option<usize>)> = match user.role {
        Role::Genuine => {
            let s = sample_sequence_with(&cfg.params_neg, n_reviews - 1, &mut rng)?;
            timeline(t0, &s.deltas, &s.states)
                .into_iter()
                .map(|(t, q)| (t, q, None))
                .collect()
        }
        Role::Spammer { raised, .. } => {
            if raised && n_reviews >= 4 {
                let n_farm = n_reviews / 2;
                let farm = sample_sequence_with(&cfg.params_neg, n_farm - 1, &mut rng)?;
                let mut ev: Vec<(i64, u8, Option<usize>)> =
                    timeline(t0, &farm.deltas, &farm.states)
                        .into_iter()
                        .map(|(t, q)| (t, q, None))
                        .collect();
                let harvest = sample_sequence_with(&cfg.params_pos, n_reviews - n_farm, &mut rng)?;
                // harvest intervals continue from the last farming review
                let mut t = ev.last().expect("farm phase is non-empty").0;
                for (d, &q) in harvest.deltas.iter().zip(&harvest.states) {
                    t += d.round() as i64;
                    ev.push((t, q, None));
                }
                ev
            } else {
                let s = sample_sequence_with(&cfg.params_pos, n_reviews - 1, &mut rng)?;
                timeline(t0, &s.deltas, &s.states)
                    .into_iter()
                    .map(|(t, q)| (t, q, None))
                    .collect()
            }
        }
    };

    if let Role::Spammer { group: Some(g), .. } = user.role {
        let plan = &plans[g];
        let c = &cfg.campaign;
        let gap = Exp::new(cfg.params_pos.rates[1]).map_err(|e| Error::Domain(e.to_string()))?;
        for (b, &w) in plan.windows.iter().enumerate() {
            let end = w + c.burst_window_seconds - 1;
            let mut t = w + rng.random_range(0..c.burst_window_seconds / 2);
            for k in 0..c.reviews_per_burst {
                if k > 0 {
                    let step = (gap.sample(&mut rng).round() as i64).max(1);
                    let room = end - t - (c.reviews_per_burst - 1 - k) as i64;
                    t += step.min(room.max(1));
                }
                let target = if k == 0 {
                    b % plan.targets.len()
                } else {
                    rng.random_range(0..plan.targets.len())
                };
                events.push((t, 1, Some(target)));
            }
        }
        events.sort_by_key(|e| e.0);
    }

    let label = match user.role {
        Role::Genuine => Label::Genuine,
        Role::Spammer { .. } => Label::Spam,
    };
    Ok(events
        .into_iter()
        .enumerate()
        .map(|(k, (t, q, target))| {
            let restaurant_id = match (user.role, target) {
                (Role::Spammer { group: Some(g), .. }, Some(ti)) => plans[g].targets[ti].clone(),
                _ => restaurant_id(rng.random_range(0..cfg.n_restaurants)),
            };
            (
                Review {
                    review_id: format!("{}-{k:04}", user.id),
                    user_id: user.id.clone(),
                    restaurant_id,
                    timestamp: t,
                    label: Some(label),
                },
                q,
            )
        })
        .collect())
}
