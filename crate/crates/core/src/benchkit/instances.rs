//! Task-instance builders for every task family.
//!
//! Builders are deterministic: instances come out sorted by instance id, and
//! ids are derived from the source post/pair identity.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::splits::SplitAssignment;
use super::templates::TemplateRegistry;
use super::{BenchError, OrderVariant, SplitSide, SplitTag, TaskInstance, TaskKind};
use crate::corpus::{bin_percentile, normalize_text, stopwords, AccountRecord, PostRecord};
use crate::pairminer::{truncate_words, ContextStore, PairType, TranssuasionPair, CONTEXT_WORD_LIMIT};
use crate::template_vars;
use crate::transcreate::TranscreationPair;

pub type AccountMap = BTreeMap<String, AccountRecord>;

/// Instances plus (source id, reason) rows for anything skipped.
pub type BuiltInstances = (Vec<TaskInstance>, Vec<(String, String)>);

pub fn account_map(accounts: &[AccountRecord]) -> AccountMap {
    accounts
        .iter()
        .map(|a| (a.account_id.clone(), a.clone()))
        .collect()
}

fn company_of(accounts: &AccountMap, account_id: &str) -> String {
    accounts
        .get(account_id)
        .filter(|a| !a.display_name.is_empty())
        .map(|a| a.display_name.clone())
        .unwrap_or_else(|| account_id.to_string())
}

fn fmt_date(dt: chrono::DateTime<chrono::Utc>) -> String {
    dt.format("%Y-%m-%d %H:%M:%S").to_string()
}

/// Caption plus keywords of the primary asset, for prompt embedding.
fn media_description(post: &PostRecord) -> Option<String> {
    let asset = post.primary_media()?;
    let caption = asset.caption.as_deref()?;
    if asset.keywords.is_empty() {
        Some(format!("\"{caption}\""))
    } else {
        Some(format!("\"{caption}\" with keywords: {}", asset.keywords.join(", ")))
    }
}

/// The `{verb}` clause appended after a draft tweet when it has media.
fn media_clause(post: &PostRecord) -> String {
    match media_description(post) {
        Some(desc) => format!("\nThe draft tweet has media featuring {desc}"),
        None => String::new(),
    }
}

fn split_tag(assignment: Option<&SplitAssignment>, side: Option<SplitSide>) -> Option<SplitTag> {
    match (assignment.and_then(|a| a.regime), side) {
        (Some(regime), Some(side)) => Some(SplitTag { regime, side }),
        _ => None,
    }
}

/// Two comparative instances per pair, orders ab and ba, labels balanced by
/// construction: the label names the position holding the outperforming
/// text.
pub fn build_ct_instances(
    pairs: &[TranssuasionPair],
    accounts: &AccountMap,
    registry: &TemplateRegistry,
    assignment: Option<&SplitAssignment>,
) -> Result<Vec<TaskInstance>, BenchError> {
    let template = registry.get("ts-ct")?;
    let mut out = Vec::with_capacity(pairs.len() * 2);
    for pair in pairs {
        let side = assignment.and_then(|a| a.pair_side(&pair.key()));
        let split = split_tag(assignment, side);
        let company = company_of(accounts, &pair.t1.account_id);
        for (variant, first, second, label) in [
            (OrderVariant::Ab, &pair.t1, &pair.t2, "B"),
            (OrderVariant::Ba, &pair.t2, &pair.t1, "A"),
        ] {
            let vars = template_vars! {
                "username" => pair.t1.account_id,
                "company" => company,
                "Tweet1" => first.normalized_text(),
                "Date1" => fmt_date(first.created_at),
                "Tweet2" => second.normalized_text(),
                "Date2" => fmt_date(second.created_at),
            };
            let suffix = match variant {
                OrderVariant::Ab => "ab",
                OrderVariant::Ba => "ba",
            };
            out.push(TaskInstance {
                instance_id: format!("ts-ct:{}:{}", pair.key(), suffix),
                task: TaskKind::TsCt,
                prompt: template.render(&vars)?,
                references: vec![],
                label: Some(label.to_string()),
                split,
                order_variant: Some(variant),
                baseline_text: Some(pair.t1.normalized_text()),
                account_id: Some(pair.t1.account_id.clone()),
            });
        }
    }
    out.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    Ok(out)
}

/// One behavior-simulation instance per percentiled post; the label is the
/// engagement bin.
pub fn build_bs_instances(
    posts: &[PostRecord],
    accounts: &AccountMap,
    registry: &TemplateRegistry,
    assignment: Option<&SplitAssignment>,
) -> Result<Vec<TaskInstance>, BenchError> {
    let template = registry.get("bs")?;
    let mut out = Vec::with_capacity(posts.len());
    for post in posts {
        let percentile = post
            .like_percentile
            .ok_or_else(|| BenchError::Unpercentiled(post.post_id.clone()))?;
        let bin = bin_percentile(percentile)?;
        let media = media_description(post).unwrap_or_else(|| "no media".to_string());
        let vars = template_vars! {
            "Brand" => company_of(accounts, &post.account_id),
            "Username" => post.account_id,
            "Date" => fmt_date(post.created_at),
            "Tweet" => post.normalized_text(),
            "Media_content_description" => media,
        };
        let side = assignment.and_then(|a| a.post_side(&post.post_id));
        out.push(TaskInstance {
            instance_id: format!("bs:{}", post.post_id),
            task: TaskKind::Bs,
            prompt: template.render(&vars)?,
            references: vec![],
            label: Some(bin.label().to_string()),
            split: split_tag(assignment, side),
            order_variant: None,
            baseline_text: None,
            account_id: Some(post.account_id.clone()),
        });
    }
    out.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsVariant {
    Key,
    Web,
    Img,
}

impl std::str::FromStr for CsVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "key" => Ok(CsVariant::Key),
            "web" => Ok(CsVariant::Web),
            "img" => Ok(CsVariant::Img),
            other => Err(format!("unknown content-simulation variant: {other}")),
        }
    }
}

/// Top-5 keywords per post: non-stopword tokens ranked by term frequency
/// times inverse corpus frequency. Placeholder and emoji tokens are skipped.
pub fn extract_keywords(posts: &[PostRecord]) -> BTreeMap<String, Vec<String>> {
    let clean = |token: &str| -> Option<String> {
        if token.starts_with('<') || token.starts_with(':') {
            return None;
        }
        let cleaned: String = token
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect::<String>()
            .to_lowercase();
        if cleaned.len() < 2 || stopwords().contains(cleaned.as_str()) {
            None
        } else {
            Some(cleaned)
        }
    };

    let mut doc_freq: HashMap<String, usize> = HashMap::new();
    let mut per_post: Vec<(String, HashMap<String, usize>)> = Vec::new();
    for post in posts {
        let mut tf: HashMap<String, usize> = HashMap::new();
        for token in post.normalized_text().split_whitespace() {
            if let Some(t) = clean(token) {
                *tf.entry(t).or_default() += 1;
            }
        }
        for token in tf.keys() {
            *doc_freq.entry(token.clone()).or_default() += 1;
        }
        per_post.push((post.post_id.clone(), tf));
    }

    let n = posts.len() as f64;
    per_post
        .into_iter()
        .map(|(post_id, tf)| {
            let mut scored: Vec<(String, f64)> = tf
                .into_iter()
                .map(|(token, count)| {
                    let df = doc_freq.get(&token).copied().unwrap_or(1) as f64;
                    let icf = ((1.0 + n) / (1.0 + df)).ln() + 1.0;
                    (token, count as f64 * icf)
                })
                .collect();
            scored.sort_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| a.0.cmp(&b.0))
            });
            (post_id, scored.into_iter().take(5).map(|(t, _)| t).collect())
        })
        .collect()
}

/// Content-simulation instances. Posts missing the variant's required input
/// (keywords, webpage context, or media caption) are skipped with a reason.
pub fn build_cs_instances(
    posts: &[PostRecord],
    variant: CsVariant,
    accounts: &AccountMap,
    registry: &TemplateRegistry,
    contexts: &ContextStore,
    assignment: Option<&SplitAssignment>,
) -> Result<BuiltInstances, BenchError> {
    let (template_id, task) = match variant {
        CsVariant::Key => ("cs-key", TaskKind::CsKey),
        CsVariant::Web => ("cs-web", TaskKind::CsWeb),
        CsVariant::Img => ("cs-img", TaskKind::CsImg),
    };
    let template = registry.get(template_id)?;
    let keywords = match variant {
        CsVariant::Key => extract_keywords(posts),
        _ => BTreeMap::new(),
    };

    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for post in posts {
        let percentile = post
            .like_percentile
            .ok_or_else(|| BenchError::Unpercentiled(post.post_id.clone()))?;
        let bin = bin_percentile(percentile)?;
        let mut vars = template_vars! {
            "company" => company_of(accounts, &post.account_id),
            "username" => post.account_id,
            "date" => fmt_date(post.created_at),
            "target_bin" => bin.label(),
        };
        match variant {
            CsVariant::Key => {
                let kws = keywords.get(&post.post_id).cloned().unwrap_or_default();
                if kws.is_empty() {
                    skipped.push((post.post_id.clone(), "no_keywords".to_string()));
                    continue;
                }
                vars.insert("keywords", kws.join(", "));
            }
            CsVariant::Web => {
                let excerpt = post
                    .link_domains
                    .iter()
                    .find_map(|link| contexts.get(link));
                let Some(excerpt) = excerpt else {
                    skipped.push((post.post_id.clone(), "no_context".to_string()));
                    continue;
                };
                vars.insert(
                    "webpage_description",
                    truncate_words(excerpt, CONTEXT_WORD_LIMIT),
                );
            }
            CsVariant::Img => {
                let Some(desc) = media_description(post) else {
                    skipped.push((post.post_id.clone(), "no_caption".to_string()));
                    continue;
                };
                vars.insert("image_description", desc);
            }
        }
        let side = assignment.and_then(|a| a.post_side(&post.post_id));
        out.push(TaskInstance {
            instance_id: format!("{}:{}", template_id, post.post_id),
            task,
            prompt: template.render(&vars)?,
            references: vec![post.normalized_text()],
            label: Some(bin.label().to_string()),
            split: split_tag(assignment, side),
            order_variant: None,
            baseline_text: None,
            account_id: Some(post.account_id.clone()),
        });
    }
    out.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    Ok((out, skipped))
}

fn gt_template_id(pair_type: PairType) -> &'static str {
    match pair_type {
        PairType::Ref => "ts-gt-ref",
        PairType::Parap => "ts-gt-parap",
        PairType::FFRef => "ts-gt-ffref",
        PairType::FFPara => "ts-gt-ffpara",
        PairType::VisOnly => "ts-gt-visonly",
        PairType::Hilight => "ts-gt-hilight",
        PairType::AddImg => "ts-gt-addimg",
        PairType::TextOnly => "ts-gt-textonly",
    }
}

/// Generative-transsuasion instances, one per pair, prompt per type. The
/// reference is the outperforming text, except VisOnly where the target is
/// the outperforming side's media description.
pub fn build_gt_instances(
    pairs: &[TranssuasionPair],
    accounts: &AccountMap,
    registry: &TemplateRegistry,
    assignment: Option<&SplitAssignment>,
) -> Result<BuiltInstances, BenchError> {
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for pair in pairs {
        let template = registry.get(gt_template_id(pair.pair_type))?;
        let company = company_of(accounts, &pair.t1.account_id);
        let mut vars = template_vars! {
            "username" => pair.t1.account_id,
            "company" => company,
            "tweet_x" => pair.t1.normalized_text(),
            "date" => fmt_date(pair.t2.created_at),
        };
        if template.required.contains("verb") {
            vars.insert("verb", media_clause(&pair.t1));
        }
        let references = match pair.pair_type {
            PairType::VisOnly => {
                vars.insert("tweet_y", pair.t2.normalized_text());
                match pair.t2.primary_media().and_then(|m| m.caption.clone()) {
                    Some(caption) => vec![caption],
                    None => {
                        skipped.push((pair.key(), "visonly_missing_output_caption".to_string()));
                        continue;
                    }
                }
            }
            PairType::TextOnly => {
                match media_description(&pair.t2) {
                    Some(desc) => vars.insert("verb2", desc),
                    None => {
                        skipped.push((pair.key(), "textonly_missing_output_media".to_string()));
                        continue;
                    }
                };
                vec![pair.t2.normalized_text()]
            }
            PairType::Hilight => {
                vars.insert(
                    "webpage",
                    pair.context
                        .clone()
                        .unwrap_or_else(|| "(no webpage excerpt available)".to_string()),
                );
                vec![pair.t2.normalized_text()]
            }
            _ => vec![pair.t2.normalized_text()],
        };
        let side = assignment.and_then(|a| a.pair_side(&pair.key()));
        out.push(TaskInstance {
            instance_id: format!("{}:{}", gt_template_id(pair.pair_type), pair.key()),
            task: TaskKind::TsGt(pair.pair_type),
            prompt: template.render(&vars)?,
            references,
            label: None,
            split: split_tag(assignment, side),
            order_variant: None,
            baseline_text: Some(pair.t1.normalized_text()),
            account_id: Some(pair.t1.account_id.clone()),
        });
    }
    out.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    Ok((out, skipped))
}

/// Transcreation instances: adapt `t1` from `u1` for `u2`'s audience.
pub fn build_tc_instances(
    tc_pairs: &[TranscreationPair],
    accounts: &AccountMap,
    registry: &TemplateRegistry,
    assignment: Option<&SplitAssignment>,
) -> Result<Vec<TaskInstance>, BenchError> {
    let template = registry.get("tc")?;
    let mut out = Vec::with_capacity(tc_pairs.len());
    for pair in tc_pairs {
        let audience = |u: &str| format!("the audience of {u}");
        let company = pair
            .company_group
            .strip_prefix("grp-")
            .unwrap_or(&pair.company_group)
            .to_string();
        let vars = template_vars! {
            "username1" => pair.u1,
            "demographic1" => audience(&pair.u1),
            "username2" => pair.u2,
            "demographic2" => audience(&pair.u2),
            "company" => company_of(accounts, &company),
            "tweet_x" => pair.t1.normalized_text(),
            "date" => fmt_date(pair.t2.created_at),
        };
        let side = assignment.and_then(|a| a.post_side(&pair.t2.post_id));
        out.push(TaskInstance {
            instance_id: format!("tc:{}", pair.key()),
            task: TaskKind::Tc,
            prompt: template.render(&vars)?,
            references: vec![pair.t2.normalized_text()],
            label: None,
            split: split_tag(assignment, side),
            order_variant: None,
            baseline_text: Some(pair.t1.normalized_text()),
            account_id: Some(pair.u1.clone()),
        });
    }
    out.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    Ok(out)
}

/// One marketing-blog record from the export side-file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlogRecord {
    pub blog_id: String,
    pub title: String,
    pub author: String,
    pub published: String,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub reading_time_minutes: f64,
    pub views: u64,
    pub dwell_seconds: f64,
}

/// Number of same-author in-context examples attached to blog prompts.
pub const BLOG_ICL_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlogMetric {
    Views,
    Dwell,
}

/// Blog KPI instances: labels are low/medium/high by midrank percentile over
/// the whole export (30-50-20 proportions), with up to 10 same-author prior
/// posts as in-context examples. Authors with fewer prior posts get as many
/// as exist and are flagged.
pub fn build_blog_instances(
    records: &[BlogRecord],
    metric: BlogMetric,
    registry: &TemplateRegistry,
) -> Result<(Vec<TaskInstance>, Vec<String>), BenchError> {
    let (template_id, task) = match metric {
        BlogMetric::Views => ("blog-views", TaskKind::BlogViews),
        BlogMetric::Dwell => ("blog-dwell", TaskKind::BlogDwell),
    };
    let template = registry.get(template_id)?;

    let values: Vec<u64> = records
        .iter()
        .map(|r| match metric {
            BlogMetric::Views => r.views,
            BlogMetric::Dwell => r.dwell_seconds.round() as u64,
        })
        .collect();
    let percentiles = crate::corpus::midrank_percentiles(&values);

    let bin_label = |idx: usize| -> Result<&'static str, BenchError> {
        Ok(bin_percentile(percentiles[idx])?.label())
    };

    let mut by_author: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_author.entry(r.author.as_str()).or_default().push(i);
    }
    for indices in by_author.values_mut() {
        indices.sort_by(|&a, &b| {
            (&records[a].published, &records[a].blog_id)
                .cmp(&(&records[b].published, &records[b].blog_id))
        });
    }

    let mut out = Vec::new();
    let mut flagged = Vec::new();
    for (idx, record) in records.iter().enumerate() {
        let siblings = &by_author[record.author.as_str()];
        let my_pos = siblings.iter().position(|&i| i == idx).unwrap_or(0);
        let prior: Vec<usize> = siblings[..my_pos]
            .iter()
            .rev()
            .take(BLOG_ICL_SAMPLES)
            .copied()
            .collect();
        if prior.len() < BLOG_ICL_SAMPLES {
            flagged.push(record.blog_id.clone());
        }
        let mut icl = String::new();
        if prior.is_empty() {
            icl.push_str("No prior posts from this author are available.\n");
        } else {
            icl.push_str("Previous posts from the same author:\n");
            for &p in prior.iter().rev() {
                icl.push_str(&format!(
                    "- \"{}\" ({}): {}\n",
                    records[p].title,
                    records[p].published,
                    bin_label(p)?
                ));
            }
        }
        let mut vars = template_vars! {
            "icl_examples" => icl,
            "title" => record.title,
            "author" => record.author,
            "date_of_publication" => record.published,
            "tags" => record.tags.join(", "),
        };
        if matches!(metric, BlogMetric::Dwell) {
            vars.insert(
                "estimated_reading_time",
                format!("{} min", record.reading_time_minutes),
            );
        }
        out.push(TaskInstance {
            instance_id: format!("{}:{}", template_id, record.blog_id),
            task,
            prompt: template.render(&vars)?,
            references: vec![],
            label: Some(bin_label(idx)?.to_string()),
            split: None,
            order_variant: None,
            baseline_text: None,
            account_id: Some(record.author.clone()),
        });
    }
    out.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    Ok((out, flagged))
}

/// Read blog records from NDJSON.
pub fn read_blog_records<R: std::io::BufRead>(reader: R) -> Result<Vec<BlogRecord>, BenchError> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Keep instance text normalization consistent for submissions scored later.
pub fn normalize_candidate(text: &str) -> String {
    normalize_text(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::MediaAsset;
    use crate::pairminer::PairType;
    use chrono::NaiveDateTime;

    fn post(id: &str, account: &str, text: &str, percentile: f64) -> PostRecord {
        PostRecord {
            post_id: id.to_string(),
            account_id: account.to_string(),
            created_at: NaiveDateTime::parse_from_str("2020-05-01 10:00:00", "%Y-%m-%d %H:%M:%S")
                .unwrap()
                .and_utc(),
            text: text.to_string(),
            media: vec![],
            like_count: 10,
            link_domains: vec![],
            hashtags: vec![],
            mentions: vec![],
            like_percentile: Some(percentile),
            normalized: true,
        }
    }

    fn pair(ptype: PairType) -> TranssuasionPair {
        let mut t1 = post("p1", "acme", "first draft of the announcement", 10.0);
        let mut t2 = post("p2", "acme", "much better version of the announcement", 90.0);
        if matches!(ptype, PairType::VisOnly | PairType::TextOnly) {
            t1.media.push(MediaAsset {
                asset_id: "m1".into(),
                caption: Some("a sunny field".into()),
                keywords: vec!["sun".into()],
            });
            t2.media.push(MediaAsset {
                asset_id: "m2".into(),
                caption: Some("a sunnier field".into()),
                keywords: vec![],
            });
        }
        TranssuasionPair {
            t1,
            t2,
            pair_type: ptype,
            cosine: 0.9,
            edit_sim: Some(0.7),
            media_sim: None,
            day_gap: 3.0,
            percentile_gap: 80.0,
            context: Some("excerpt words here".into()),
        }
    }

    #[test]
    fn ct_twins_have_opposite_labels() {
        let registry = TemplateRegistry::builtin();
        let instances =
            build_ct_instances(&[pair(PairType::Ref)], &AccountMap::new(), &registry, None)
                .unwrap();
        assert_eq!(instances.len(), 2);
        let labels: Vec<&str> = instances.iter().map(|i| i.label.as_deref().unwrap()).collect();
        assert!(labels.contains(&"A") && labels.contains(&"B"));
        // label distribution is exactly 50/50 by construction
        let a_count = labels.iter().filter(|l| **l == "A").count();
        assert_eq!(a_count * 2, labels.len());
    }

    #[test]
    fn bs_labels_follow_bins() {
        let registry = TemplateRegistry::builtin();
        let posts = vec![
            post("hi", "acme", "doing well this quarter", 85.0),
            post("lo", "acme", "not doing great honestly", 10.0),
        ];
        let instances = build_bs_instances(&posts, &AccountMap::new(), &registry, None).unwrap();
        let by_id: BTreeMap<&str, &TaskInstance> = instances
            .iter()
            .map(|i| (i.instance_id.as_str(), i))
            .collect();
        assert_eq!(by_id["bs:hi"].label.as_deref(), Some("high"));
        assert_eq!(by_id["bs:lo"].label.as_deref(), Some("low"));
    }

    #[test]
    fn bs_prompt_embeds_caption_when_present() {
        let registry = TemplateRegistry::builtin();
        let mut p = post("m", "acme", "look at this", 50.0);
        p.media.push(MediaAsset {
            asset_id: "a".into(),
            caption: Some("a man singing into a microphone".into()),
            keywords: vec![],
        });
        let instances = build_bs_instances(&[p], &AccountMap::new(), &registry, None).unwrap();
        assert!(instances[0].prompt.contains("a man singing into a microphone"));
    }

    #[test]
    fn bs_requires_percentiles() {
        let registry = TemplateRegistry::builtin();
        let mut p = post("u", "acme", "text", 50.0);
        p.like_percentile = None;
        assert!(matches!(
            build_bs_instances(&[p], &AccountMap::new(), &registry, None),
            Err(BenchError::Unpercentiled(_))
        ));
    }

    #[test]
    fn cs_key_keywords_capped_at_five() {
        let registry = TemplateRegistry::builtin();
        let posts = vec![post(
            "k",
            "acme",
            "massive discount on premium laptops desktops monitors accessories peripherals today",
            50.0,
        )];
        let (instances, skipped) = build_cs_instances(
            &posts,
            CsVariant::Key,
            &AccountMap::new(),
            &registry,
            &ContextStore::default(),
            None,
        )
        .unwrap();
        assert!(skipped.is_empty());
        let kws = extract_keywords(&posts);
        assert!(kws["k"].len() <= 5);
        assert!(instances[0].prompt.contains(&kws["k"][0]));
    }

    #[test]
    fn cs_img_embeds_caption_verbatim() {
        let registry = TemplateRegistry::builtin();
        let mut p = post("i", "acme", "see photo", 50.0);
        p.media.push(MediaAsset {
            asset_id: "a".into(),
            caption: Some("three red bicycles".into()),
            keywords: vec![],
        });
        let (instances, _) = build_cs_instances(
            &[p],
            CsVariant::Img,
            &AccountMap::new(),
            &registry,
            &ContextStore::default(),
            None,
        )
        .unwrap();
        assert!(instances[0].prompt.contains("three red bicycles"));
    }

    #[test]
    fn cs_web_truncates_context() {
        let registry = TemplateRegistry::builtin();
        let mut p = post("w", "acme", "read this", 50.0);
        p.link_domains = vec!["ex.com/page".to_string()];
        let mut contexts = ContextStore::default();
        let long: String = (0..300).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        contexts.insert("ex.com/page", &long);
        let (instances, _) = build_cs_instances(
            &[p],
            CsVariant::Web,
            &AccountMap::new(),
            &registry,
            &contexts,
            None,
        )
        .unwrap();
        // 150-word excerpt made it into the prompt; word 151 did not
        assert!(instances[0].prompt.contains("w149"));
        assert!(!instances[0].prompt.contains("w150 "));
    }

    #[test]
    fn cs_missing_inputs_are_skipped_with_reason() {
        let registry = TemplateRegistry::builtin();
        let p = post("x", "acme", "plain text post", 50.0);
        let (instances, skipped) = build_cs_instances(
            &[p],
            CsVariant::Img,
            &AccountMap::new(),
            &registry,
            &ContextStore::default(),
            None,
        )
        .unwrap();
        assert!(instances.is_empty());
        assert_eq!(skipped[0].1, "no_caption");
    }

    #[test]
    fn gt_ref_prompt_filled() {
        let registry = TemplateRegistry::builtin();
        let (instances, skipped) =
            build_gt_instances(&[pair(PairType::Ref)], &AccountMap::new(), &registry, None)
                .unwrap();
        assert!(skipped.is_empty());
        let inst = &instances[0];
        assert!(inst.prompt.contains("first draft of the announcement"));
        assert!(inst.prompt.contains("2020-05-01 10:00:00"));
        assert_eq!(inst.references, vec!["much better version of the announcement"]);
        assert_eq!(inst.baseline_text.as_deref(), Some("first draft of the announcement"));
    }

    #[test]
    fn gt_hilight_embeds_context() {
        let registry = TemplateRegistry::builtin();
        let (instances, _) =
            build_gt_instances(&[pair(PairType::Hilight)], &AccountMap::new(), &registry, None)
                .unwrap();
        assert!(instances[0].prompt.contains("excerpt words here"));
    }

    #[test]
    fn gt_visonly_reference_is_output_caption() {
        let registry = TemplateRegistry::builtin();
        let (instances, _) =
            build_gt_instances(&[pair(PairType::VisOnly)], &AccountMap::new(), &registry, None)
                .unwrap();
        assert_eq!(instances[0].references, vec!["a sunnier field"]);
        assert!(instances[0].prompt.contains("a sunny field"));
    }

    #[test]
    fn tc_prompt_names_both_usernames() {
        let registry = TemplateRegistry::builtin();
        let tc = TranscreationPair {
            t1: post("a", "brandin", "original text for india", 10.0),
            u1: "brandin".to_string(),
            t2: post("b", "brandus", "adapted text for the us", 90.0),
            u2: "brandus".to_string(),
            cosine: 0.85,
            percentile_gap: 80.0,
            company_group: "grp-brandin".to_string(),
        };
        let instances = build_tc_instances(&[tc], &AccountMap::new(), &registry, None).unwrap();
        let prompt = &instances[0].prompt;
        assert!(prompt.contains("brandin"));
        assert!(prompt.contains("brandus"));
        assert!(prompt.contains("the audience of brandus"));
    }

    fn blog(id: &str, author: &str, day: u32, views: u64) -> BlogRecord {
        BlogRecord {
            blog_id: id.to_string(),
            title: format!("Post {id}"),
            author: author.to_string(),
            published: format!("2023-01-{day:02}"),
            tags: vec!["growth".to_string()],
            reading_time_minutes: 4.0,
            views,
            dwell_seconds: views as f64,
        }
    }

    #[test]
    fn blog_instances_bin_and_flag() {
        let registry = TemplateRegistry::builtin();
        let records: Vec<BlogRecord> = (1..=20)
            .map(|i| blog(&format!("b{i:02}"), "alice", i, i as u64 * 10))
            .collect();
        let (instances, flagged) =
            build_blog_instances(&records, BlogMetric::Views, &registry).unwrap();
        assert_eq!(instances.len(), 20);
        // fewer than 10 priors for the first ten posts
        assert!(flagged.contains(&"b01".to_string()));
        assert!(!flagged.contains(&"b20".to_string()));
        let labels: Vec<&str> = instances.iter().map(|i| i.label.as_deref().unwrap()).collect();
        assert!(labels.contains(&"low") && labels.contains(&"medium") && labels.contains(&"high"));
        // ICL lines appear in later posts
        let last = instances.iter().find(|i| i.instance_id == "blog-views:b20").unwrap();
        assert!(last.prompt.contains("Previous posts from the same author"));
    }
}
