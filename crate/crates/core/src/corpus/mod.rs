//! Corpus preparation: post/account records, the post- and account-level
//! filters, and per-group like percentiles.

pub mod io;
pub mod normalize;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::{self, Provider, ProviderError};
pub use normalize::{normalize_text, word_count};

const STOPWORDS_TXT: &str = include_str!("data/stopwords.txt");

/// Shipped English stopword list (lowercase tokens).
pub fn stopwords() -> &'static BTreeSet<&'static str> {
    static SET: std::sync::OnceLock<BTreeSet<&'static str>> = std::sync::OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_TXT
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate post_id {post_id}: lines {first_line} and {second_line}")]
    DuplicatePostId {
        post_id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("percentile {0} outside [0, 100]")]
    PercentileOutOfRange(f64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// One media attachment, verbalized by a captioner at most once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaAsset {
    pub asset_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default)]
    pub keywords: Vec<String>,
}

/// One normalized social post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostRecord {
    pub post_id: String,
    pub account_id: String,
    pub created_at: DateTime<Utc>,
    pub text: String,
    #[serde(default)]
    pub media: Vec<MediaAsset>,
    pub like_count: u64,
    #[serde(default)]
    pub link_domains: Vec<String>,
    #[serde(default)]
    pub hashtags: Vec<String>,
    #[serde(default)]
    pub mentions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub like_percentile: Option<f64>,
    #[serde(default)]
    pub normalized: bool,
}

impl PostRecord {
    pub fn has_media(&self) -> bool {
        !self.media.is_empty()
    }

    /// The asset used for media gating and prompt verbalization.
    pub fn primary_media(&self) -> Option<&MediaAsset> {
        self.media.first()
    }

    /// Text with placeholders applied, whether or not the record was
    /// normalized in place.
    pub fn normalized_text(&self) -> String {
        if self.normalized {
            self.text.clone()
        } else {
            normalize_text(&self.text)
        }
    }

    /// Replace text with its normalized form and mark the record.
    pub fn normalize_in_place(&mut self) {
        if !self.normalized {
            self.text = normalize_text(&self.text);
            self.normalized = true;
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountCategory {
    Company,
    Organization,
    Group,
    Person,
    Other,
    #[default]
    Unclassified,
}

/// Account-level profile used by the account filters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountRecord {
    pub account_id: String,
    #[serde(default)]
    pub display_name: String,
    #[serde(default)]
    pub bio: String,
    #[serde(default)]
    pub category: AccountCategory,
    #[serde(default)]
    pub total_posts: u64,
    #[serde(default)]
    pub max_posts_per_day: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub news_share: Option<f64>,
}

impl AccountRecord {
    pub fn new(account_id: impl Into<String>) -> Self {
        AccountRecord {
            account_id: account_id.into(),
            display_name: String::new(),
            bio: String::new(),
            category: AccountCategory::Unclassified,
            total_posts: 0,
            max_posts_per_day: 0.0,
            news_share: None,
        }
    }
}

/// Exact per-stage counts for a filter pass. Output of stage k is the input
/// of stage k+1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub stages: Vec<FilterStage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterStage {
    pub stage: String,
    pub input_count: u64,
    pub output_count: u64,
    pub removals: BTreeMap<String, u64>,
}

impl FilterReport {
    fn push_stage(&mut self, stage: &str, input: u64, output: u64, removals: BTreeMap<String, u64>) {
        debug_assert!(output <= input);
        self.stages.push(FilterStage {
            stage: stage.to_string(),
            input_count: input,
            output_count: output,
            removals,
        });
    }

    /// True when every stage's output equals the next stage's input.
    pub fn telescopes(&self) -> bool {
        self.stages
            .windows(2)
            .all(|w| w[0].output_count == w[1].input_count)
    }
}

/// Canonical corpus ordering: (account_id, created_at, post_id).
pub fn sort_canonical(posts: &mut [PostRecord]) {
    posts.sort_by(|a, b| {
        (&a.account_id, a.created_at, &a.post_id).cmp(&(&b.account_id, b.created_at, &b.post_id))
    });
}

/// Post-level filters, applied in order: reply posts, posts before the
/// cutoff date, posts under the word minimum (counted on normalized text),
/// posts under the like minimum. Thresholds are strict "less than" on the
/// removal side.
pub fn filter_posts(
    posts: Vec<PostRecord>,
    cutoff_date: NaiveDate,
    min_words: usize,
    min_likes: u64,
) -> (Vec<PostRecord>, FilterReport) {
    let mut report = FilterReport::default();

    let input = posts.len() as u64;
    let (kept, removed): (Vec<_>, Vec<_>) = posts.into_iter().partition(|p| {
        !(p.text.starts_with('@') || p.text.starts_with(normalize::USERNAME_PLACEHOLDER))
    });
    let mut removals = BTreeMap::new();
    if !removed.is_empty() {
        removals.insert("reply".to_string(), removed.len() as u64);
    }
    report.push_stage("reply", input, kept.len() as u64, removals);

    let input = kept.len() as u64;
    let (kept, removed): (Vec<_>, Vec<_>) = kept
        .into_iter()
        .partition(|p| p.created_at.date_naive() >= cutoff_date);
    let mut removals = BTreeMap::new();
    if !removed.is_empty() {
        removals.insert("before_cutoff".to_string(), removed.len() as u64);
    }
    report.push_stage("date", input, kept.len() as u64, removals);

    let input = kept.len() as u64;
    let (kept, removed): (Vec<_>, Vec<_>) = kept
        .into_iter()
        .partition(|p| word_count(&p.normalized_text()) >= min_words);
    let mut removals = BTreeMap::new();
    if !removed.is_empty() {
        removals.insert("too_few_words".to_string(), removed.len() as u64);
    }
    report.push_stage("words", input, kept.len() as u64, removals);

    let input = kept.len() as u64;
    let (kept, removed): (Vec<_>, Vec<_>) =
        kept.into_iter().partition(|p| p.like_count >= min_likes);
    let mut removals = BTreeMap::new();
    if !removed.is_empty() {
        removals.insert("too_few_likes".to_string(), removed.len() as u64);
    }
    report.push_stage("likes", input, kept.len() as u64, removals);

    (kept, report)
}

/// Outcome of profiling: accounts in deterministic order plus per-account
/// classifier failures (those accounts keep `news_share` unset).
#[derive(Debug)]
pub struct ProfileOutcome {
    pub accounts: Vec<AccountRecord>,
    pub errors: Vec<(String, ProviderError)>,
}

/// Fill `total_posts`, `max_posts_per_day`, and `news_share` from the post
/// stream. Accounts absent from `posts` keep zero counts; accounts present
/// in `posts` but missing from `accounts` are synthesized unclassified.
pub fn profile_accounts(
    posts: &[PostRecord],
    accounts: Vec<AccountRecord>,
    news_classifier: Option<&dyn Provider>,
) -> ProfileOutcome {
    let mut by_id: BTreeMap<String, AccountRecord> = accounts
        .into_iter()
        .map(|a| (a.account_id.clone(), a))
        .collect();

    let mut per_account: HashMap<&str, Vec<&PostRecord>> = HashMap::new();
    for p in posts {
        per_account.entry(&p.account_id).or_default().push(p);
    }
    for id in per_account.keys() {
        by_id
            .entry((*id).to_string())
            .or_insert_with(|| AccountRecord::new(*id));
    }

    let mut errors = Vec::new();
    for account in by_id.values_mut() {
        let Some(posts) = per_account.get(account.account_id.as_str()) else {
            account.total_posts = 0;
            account.max_posts_per_day = 0.0;
            continue;
        };
        account.total_posts = posts.len() as u64;
        let mut per_day: BTreeMap<NaiveDate, u64> = BTreeMap::new();
        for p in posts {
            *per_day.entry(p.created_at.date_naive()).or_default() += 1;
        }
        account.max_posts_per_day = per_day.values().copied().max().unwrap_or(0) as f64;

        if let Some(classifier) = news_classifier {
            let mut news = 0usize;
            let mut failed = None;
            for p in posts {
                match providers::classify_text(classifier, &p.text, &["news", "not_news"]) {
                    Ok(label) if label == "news" => news += 1,
                    Ok(_) => {}
                    Err(e) => {
                        failed = Some(e);
                        break;
                    }
                }
            }
            match failed {
                Some(e) => {
                    account.news_share = None;
                    errors.push((account.account_id.clone(), e));
                }
                None => account.news_share = Some(news as f64 / posts.len() as f64),
            }
        }
    }

    ProfileOutcome {
        accounts: by_id.into_values().collect(),
        errors,
    }
}

/// Account-level filters; every threshold is inclusive on the keep side.
pub fn filter_accounts(
    accounts: Vec<AccountRecord>,
    min_posts: u64,
    max_daily: f64,
    max_news_share: f64,
    allowed_categories: &BTreeSet<AccountCategory>,
) -> (Vec<AccountRecord>, FilterReport) {
    let mut report = FilterReport::default();

    let input = accounts.len() as u64;
    let (kept, removed): (Vec<_>, Vec<_>) = accounts
        .into_iter()
        .partition(|a| a.total_posts >= min_posts);
    let mut removals = BTreeMap::new();
    if !removed.is_empty() {
        removals.insert("below_min_posts".to_string(), removed.len() as u64);
    }
    report.push_stage("min_posts", input, kept.len() as u64, removals);

    let input = kept.len() as u64;
    let (kept, removed): (Vec<_>, Vec<_>) = kept
        .into_iter()
        .partition(|a| a.max_posts_per_day <= max_daily);
    let mut removals = BTreeMap::new();
    if !removed.is_empty() {
        removals.insert("above_max_daily".to_string(), removed.len() as u64);
    }
    report.push_stage("max_daily", input, kept.len() as u64, removals);

    let input = kept.len() as u64;
    let mut removals: BTreeMap<String, u64> = BTreeMap::new();
    let (kept, removed): (Vec<_>, Vec<_>) = kept.into_iter().partition(|a| {
        matches!(a.news_share, Some(s) if s <= max_news_share)
    });
    for a in &removed {
        let reason = if a.news_share.is_none() {
            "news_share_unset"
        } else {
            "news_share_above_max"
        };
        *removals.entry(reason.to_string()).or_default() += 1;
    }
    report.push_stage("news_share", input, kept.len() as u64, removals);

    let input = kept.len() as u64;
    let mut removals: BTreeMap<String, u64> = BTreeMap::new();
    let (kept, removed): (Vec<_>, Vec<_>) = kept
        .into_iter()
        .partition(|a| allowed_categories.contains(&a.category));
    for a in &removed {
        let reason = if a.category == AccountCategory::Unclassified {
            "unclassified"
        } else {
            "category_not_allowed"
        };
        *removals.entry(reason.to_string()).or_default() += 1;
    }
    report.push_stage("category", input, kept.len() as u64, removals);

    (kept, report)
}

/// Default keep-side categories for account filtering.
pub fn default_allowed_categories() -> BTreeSet<AccountCategory> {
    [
        AccountCategory::Company,
        AccountCategory::Organization,
        AccountCategory::Other,
    ]
    .into_iter()
    .collect()
}

/// How posts are grouped before ranking like counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PercentileGrouping {
    AccountMonth,
    Month,
}

impl std::str::FromStr for PercentileGrouping {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "account-month" => Ok(PercentileGrouping::AccountMonth),
            "month" => Ok(PercentileGrouping::Month),
            other => Err(format!("unknown grouping: {other}")),
        }
    }
}

/// Midrank percentile of `like_count` within each group:
/// `100 * (average rank - 0.5) / group size`, average rank over ties.
/// A group of one scores 50.
pub fn compute_percentiles(mut posts: Vec<PostRecord>, grouping: PercentileGrouping) -> Vec<PostRecord> {
    let mut groups: BTreeMap<(String, i32, u32), Vec<usize>> = BTreeMap::new();
    for (i, p) in posts.iter().enumerate() {
        let key = match grouping {
            PercentileGrouping::AccountMonth => {
                (p.account_id.clone(), p.created_at.year(), p.created_at.month())
            }
            PercentileGrouping::Month => (String::new(), p.created_at.year(), p.created_at.month()),
        };
        groups.entry(key).or_default().push(i);
    }
    for indices in groups.values() {
        let percentiles = midrank_percentiles(
            &indices.iter().map(|&i| posts[i].like_count).collect::<Vec<_>>(),
        );
        for (&i, p) in indices.iter().zip(percentiles) {
            posts[i].like_percentile = Some(p);
        }
    }
    posts
}

/// Midrank percentiles for one group of like counts.
pub fn midrank_percentiles(likes: &[u64]) -> Vec<f64> {
    let n = likes.len();
    if n == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| likes[i]);
    let mut avg_rank = vec![0.0f64; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && likes[order[end]] == likes[order[start]] {
            end += 1;
        }
        // ranks are 1-based; ties share the average of their rank span
        let mean = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            avg_rank[idx] = mean;
        }
        start = end;
    }
    avg_rank
        .into_iter()
        .map(|r| 100.0 * (r - 0.5) / n as f64)
        .collect()
}

/// Engagement bin for a like percentile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bin {
    Low,
    Medium,
    High,
}

impl Bin {
    pub fn label(self) -> &'static str {
        match self {
            Bin::Low => "low",
            Bin::Medium => "medium",
            Bin::High => "high",
        }
    }
}

/// Partition of [0, 100]: low [0, 30), medium [30, 80), high [80, 100].
pub fn bin_percentile(p: f64) -> Result<Bin, CorpusError> {
    if !(0.0..=100.0).contains(&p) {
        return Err(CorpusError::PercentileOutOfRange(p));
    }
    Ok(if p < 30.0 {
        Bin::Low
    } else if p < 80.0 {
        Bin::Medium
    } else {
        Bin::High
    })
}
