//! Cross-account transcreation mining: sibling accounts of one company are
//! found by Jaccard matching over per-account token bags, grouped by
//! transitive closure, and then semantically similar posts are paired across
//! sibling accounts.
//!
//! Engagement gaps are measured within each account's own percentile
//! distribution, since the audiences differ by construction. The day-gap
//! window is waived for cross-account pairs.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize, stopwords, AccountRecord, PostRecord};
use crate::pairminer::GateThresholds;
use crate::providers::{self, Embedder, Provider, ProviderError};
use crate::simtext::{self, SimError};

#[derive(Debug, Error)]
pub enum TranscreateError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Provider(#[from] crate::providers::ProviderError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Minimum per-account frequency for a token to count as a keyword.
pub const KEYWORD_MIN_FREQ: usize = 3;

/// Per-account bag of hashtags, mentions, link domains, and frequent
/// keywords, built only from that account's retained posts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountSignature {
    pub account_id: String,
    pub bag: BTreeSet<String>,
}

/// Build deterministic signatures for every account seen in `posts` plus
/// every account listed in `accounts`.
pub fn build_signatures(posts: &[PostRecord], accounts: &[AccountRecord]) -> Vec<AccountSignature> {
    let mut bags: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut keyword_freq: BTreeMap<String, HashMap<String, usize>> = BTreeMap::new();

    for account in accounts {
        bags.entry(account.account_id.clone()).or_default();
    }
    for post in posts {
        let bag = bags.entry(post.account_id.clone()).or_default();
        for tag in &post.hashtags {
            bag.insert(tag.clone());
        }
        for mention in &post.mentions {
            bag.insert(format!("@{mention}"));
        }
        for link in &post.link_domains {
            bag.insert(normalize::link_domain(link).to_string());
        }
        let freq = keyword_freq.entry(post.account_id.clone()).or_default();
        for token in post.normalized_text().split_whitespace() {
            let token: String = token
                .chars()
                .filter(|c| c.is_alphanumeric())
                .collect::<String>()
                .to_lowercase();
            if token.len() < 2 || stopwords().contains(token.as_str()) {
                continue;
            }
            *freq.entry(token).or_default() += 1;
        }
    }
    for (account_id, freq) in keyword_freq {
        let bag = bags.entry(account_id).or_default();
        for (token, count) in freq {
            if count >= KEYWORD_MIN_FREQ {
                bag.insert(token);
            }
        }
    }

    bags.into_iter()
        .map(|(account_id, bag)| AccountSignature { account_id, bag })
        .collect()
}

/// Union-find with path halving and union by size.
#[derive(Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(len: usize) -> Self {
        UnionFind {
            parent: (0..len).collect(),
            size: vec![1; len],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, x: usize, y: usize) {
        let (mut xr, mut yr) = (self.find(x), self.find(y));
        if xr == yr {
            return;
        }
        if self.size[xr] < self.size[yr] {
            std::mem::swap(&mut xr, &mut yr);
        }
        self.parent[yr] = xr;
        self.size[xr] += self.size[yr];
    }
}

/// A company group: a set of sibling account ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompanyGroup {
    pub group_id: String,
    pub accounts: BTreeSet<String>,
}

/// Result of grouping, including assistant failures for singletons that
/// could not be attached.
#[derive(Debug)]
pub struct GroupingOutcome {
    pub groups: Vec<CompanyGroup>,
    pub assistant_errors: Vec<(String, ProviderError)>,
}

/// Partition accounts into company groups: union-find over all signature
/// pairs with Jaccard >= `jaccard_min`, then optionally ask a grouping
/// assistant to attach residual singletons to an existing group.
pub fn group_accounts(
    signatures: &[AccountSignature],
    jaccard_min: f64,
    grouping_assistant: Option<&dyn Provider>,
) -> GroupingOutcome {
    let n = signatures.len();
    let mut uf = UnionFind::new(n);
    for (i, sig_i) in signatures.iter().enumerate() {
        for (j, sig_j) in signatures.iter().enumerate().skip(i + 1) {
            let sim = simtext::jaccard_similarity(&sig_i.bag, &sig_j.bag).value;
            if sim >= jaccard_min {
                uf.union(i, j);
            }
        }
    }

    let mut members: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for (i, sig) in signatures.iter().enumerate() {
        members
            .entry(uf.find(i))
            .or_default()
            .insert(sig.account_id.clone());
    }
    let mut groups: Vec<BTreeSet<String>> = members.into_values().collect();
    groups.sort_by(|a, b| a.iter().next().cmp(&b.iter().next()));

    let mut assistant_errors = Vec::new();
    if let Some(assistant) = grouping_assistant {
        // Ask the assistant to bucket each singleton into one of the
        // existing multi-account groups, identified by their first member.
        let mut attached: Vec<(usize, usize)> = Vec::new();
        let multi: Vec<usize> = (0..groups.len()).filter(|&g| groups[g].len() > 1).collect();
        if !multi.is_empty() {
            for (gi, group) in groups.iter().enumerate() {
                if group.len() != 1 {
                    continue;
                }
                let singleton = group.iter().next().expect("singleton has one member");
                let options: Vec<&str> = multi
                    .iter()
                    .map(|&g| groups[g].iter().next().map(String::as_str).unwrap_or(""))
                    .collect();
                let mut labels: Vec<&str> = options.clone();
                labels.push("none");
                match providers::classify_text(assistant, singleton, &labels) {
                    Ok(label) if label != "none" => {
                        if let Some(pos) = options.iter().position(|o| *o == label) {
                            attached.push((gi, multi[pos]));
                        }
                    }
                    Ok(_) => {}
                    Err(e) => assistant_errors.push((singleton.clone(), e)),
                }
            }
        }
        for (from, to) in attached {
            let moved = std::mem::take(&mut groups[from]);
            groups[to].extend(moved);
        }
        groups.retain(|g| !g.is_empty());
    }

    let groups = groups
        .into_iter()
        .map(|accounts| CompanyGroup {
            group_id: format!(
                "grp-{}",
                accounts.iter().next().map(String::as_str).unwrap_or("empty")
            ),
            accounts,
        })
        .collect();
    GroupingOutcome {
        groups,
        assistant_errors,
    }
}

/// A cross-account pair: `t1` from account `u1` adapted as `t2` for `u2`'s
/// audience, where `t2` outperformed within its own account.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscreationPair {
    pub t1: PostRecord,
    pub u1: String,
    pub t2: PostRecord,
    pub u2: String,
    pub cosine: f64,
    pub percentile_gap: f64,
    pub company_group: String,
}

impl TranscreationPair {
    pub fn key(&self) -> String {
        format!("{}~{}", self.t1.post_id, self.t2.post_id)
    }
}

/// Mine transcreation pairs inside each company group. Gates: different
/// accounts, cosine above the transcreation threshold (strict), and a
/// within-account percentile gap of at least `delta_percentile_min`; the
/// day-gap window is waived. Multiplicity capping matches the same-account
/// miner.
pub fn mine_transcreation_pairs(
    posts: &[PostRecord],
    groups: &[CompanyGroup],
    embedder: &Embedder<'_>,
    thresholds: &GateThresholds,
    cosine_min: f64,
) -> Result<Vec<TranscreationPair>, TranscreateError> {
    let mut by_account: BTreeMap<&str, Vec<&PostRecord>> = BTreeMap::new();
    for p in posts {
        by_account.entry(p.account_id.as_str()).or_default().push(p);
    }

    let mut accepted = Vec::new();
    for group in groups {
        let accounts: Vec<&str> = group
            .accounts
            .iter()
            .map(String::as_str)
            .filter(|a| by_account.contains_key(a))
            .collect();
        for (ai, &acct_a) in accounts.iter().enumerate() {
            for &acct_b in &accounts[ai + 1..] {
                for pa in &by_account[acct_a] {
                    for pb in &by_account[acct_b] {
                        let (t1, t2) = match order_by_own_percentile(pa, pb) {
                            Some(ordered) => ordered,
                            None => continue,
                        };
                        let gap = t2.like_percentile.unwrap_or(50.0)
                            - t1.like_percentile.unwrap_or(50.0);
                        if gap < thresholds.delta_percentile_min {
                            continue;
                        }
                        let e1 = embedder.embed(&t1.normalized_text())?;
                        let e2 = embedder.embed(&t2.normalized_text())?;
                        let cosine = simtext::cosine_similarity(&e1.values, &e2.values)?.value;
                        if cosine <= cosine_min {
                            continue;
                        }
                        accepted.push(TranscreationPair {
                            t1: (*t1).clone(),
                            u1: t1.account_id.clone(),
                            t2: (*t2).clone(),
                            u2: t2.account_id.clone(),
                            cosine,
                            percentile_gap: gap,
                            company_group: group.group_id.clone(),
                        });
                    }
                }
            }
        }
    }
    Ok(cap_transcreation_multiplicity(accepted, thresholds.max_pairs_per_post))
}

fn order_by_own_percentile<'a>(
    a: &'a PostRecord,
    b: &'a PostRecord,
) -> Option<(&'a PostRecord, &'a PostRecord)> {
    if a.account_id == b.account_id {
        return None;
    }
    let pa = a.like_percentile.unwrap_or(50.0);
    let pb = b.like_percentile.unwrap_or(50.0);
    if pa < pb {
        Some((a, b))
    } else if pb < pa {
        Some((b, a))
    } else {
        None
    }
}

fn cap_transcreation_multiplicity(
    mut pairs: Vec<TranscreationPair>,
    max_pairs_per_post: usize,
) -> Vec<TranscreationPair> {
    pairs.sort_by(|a, b| {
        b.percentile_gap
            .partial_cmp(&a.percentile_gap)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| (&a.t1.post_id, &a.t2.post_id).cmp(&(&b.t1.post_id, &b.t2.post_id)))
    });
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut keep = vec![false; pairs.len()];
    for (i, pair) in pairs.iter().enumerate() {
        let c1 = counts.get(pair.t1.post_id.as_str()).copied().unwrap_or(0);
        let c2 = counts.get(pair.t2.post_id.as_str()).copied().unwrap_or(0);
        if c1 < max_pairs_per_post && c2 < max_pairs_per_post {
            keep[i] = true;
            *counts.entry(pair.t1.post_id.as_str()).or_default() += 1;
            *counts.entry(pair.t2.post_id.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<TranscreationPair> = pairs
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect();
    kept.sort_by(|a, b| {
        (&a.t1.account_id, a.t1.created_at, &a.t1.post_id, &a.t2.post_id).cmp(&(
            &b.t1.account_id,
            b.t1.created_at,
            &b.t1.post_id,
            &b.t2.post_id,
        ))
    });
    kept
}

/// Serialize groups as a JSON object: group id -> member account ids.
pub fn groups_to_json(groups: &[CompanyGroup]) -> serde_json::Value {
    let map: BTreeMap<&str, Vec<&str>> = groups
        .iter()
        .map(|g| {
            (
                g.group_id.as_str(),
                g.accounts.iter().map(String::as_str).collect(),
            )
        })
        .collect();
    serde_json::json!(map)
}

/// Write transcreation pairs as NDJSON.
pub fn write_tc_pairs<W: std::io::Write>(
    writer: &mut W,
    pairs: &[TranscreationPair],
) -> Result<(), TranscreateError> {
    for pair in pairs {
        serde_json::to_writer(&mut *writer, pair)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Read transcreation pairs from NDJSON.
pub fn read_tc_pairs<R: std::io::BufRead>(
    reader: R,
) -> Result<Vec<TranscreationPair>, TranscreateError> {
    let mut pairs = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        pairs.push(serde_json::from_str(&line)?);
    }
    Ok(pairs)
}
