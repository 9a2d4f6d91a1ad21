//! Prompt template registry.
//!
//! Templates are text files with a small front-matter header listing the
//! template id and its required placeholders, then the body with `{name}`
//! slots. The builtin set ships with the crate; `load_dir` reads the same
//! format from any directory so operators can override prompts.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::BenchError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub template_id: String,
    pub body: String,
    pub required: BTreeSet<String>,
}

impl PromptTemplate {
    /// Render with a complete variable map; every required placeholder must
    /// be provided and no `{...}` slot may survive.
    pub fn render(&self, vars: &BTreeMap<&str, String>) -> Result<String, BenchError> {
        for name in &self.required {
            if !vars.contains_key(name.as_str()) {
                return Err(BenchError::MissingVariable {
                    template: self.template_id.clone(),
                    name: name.clone(),
                });
            }
        }
        let mut out = self.body.clone();
        for (name, value) in vars {
            out = out.replace(&format!("{{{name}}}"), value);
        }
        if let Some(leftover) = find_placeholder(&out) {
            return Err(BenchError::UnresolvedPlaceholder {
                template: self.template_id.clone(),
                name: leftover,
            });
        }
        Ok(out)
    }
}

/// First `{identifier}`-shaped slot in a rendered body, if any.
fn find_placeholder(text: &str) -> Option<String> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some(end) = text[i + 1..].find('}') {
                let inner = &text[i + 1..i + 1 + end];
                if !inner.is_empty()
                    && inner
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || c == '_')
                {
                    return Some(inner.to_string());
                }
            }
        }
        i += 1;
    }
    None
}

fn parse_template(source: &str, origin: &str) -> Result<PromptTemplate, BenchError> {
    let mut lines = source.lines();
    if lines.next().map(str::trim) != Some("---") {
        return Err(BenchError::TemplateFormat {
            origin: origin.to_string(),
            reason: "missing front-matter opening '---'".to_string(),
        });
    }
    let mut template_id = None;
    let mut required = BTreeSet::new();
    for line in lines.by_ref() {
        let line = line.trim();
        if line == "---" {
            break;
        }
        if let Some(rest) = line.strip_prefix("id:") {
            template_id = Some(rest.trim().to_string());
        } else if let Some(rest) = line.strip_prefix("placeholders:") {
            required = rest
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect();
        }
    }
    let template_id = template_id.ok_or_else(|| BenchError::TemplateFormat {
        origin: origin.to_string(),
        reason: "front matter missing 'id:'".to_string(),
    })?;
    let body: String = lines.collect::<Vec<_>>().join("\n");
    Ok(PromptTemplate {
        template_id,
        body: body.trim_end().to_string(),
        required,
    })
}

/// Registry of prompt templates by id.
#[derive(Debug, Clone, Default)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, PromptTemplate>,
}

macro_rules! builtin_templates {
    ($($file:literal),+ $(,)?) => {
        &[$(($file, include_str!(concat!("templates/", $file)))),+]
    };
}

const BUILTIN: &[(&str, &str)] = builtin_templates![
    "bs.txt",
    "cs-key.txt",
    "cs-img.txt",
    "cs-web.txt",
    "ts-ct.txt",
    "ts-gt-ref.txt",
    "ts-gt-parap.txt",
    "ts-gt-ffref.txt",
    "ts-gt-ffpara.txt",
    "ts-gt-visonly.txt",
    "ts-gt-hilight.txt",
    "ts-gt-addimg.txt",
    "ts-gt-textonly.txt",
    "tc.txt",
    "explain.txt",
    "he-vote.txt",
    "he-reason-upvote.txt",
    "he-reason-downvote.txt",
    "he-feedback.txt",
    "he-opinion.txt",
    "blog-views.txt",
    "blog-dwell.txt",
    "username-classification.txt",
    "username-mapping.txt",
    "targeting.txt",
];

impl TemplateRegistry {
    /// The template set shipped with the crate.
    pub fn builtin() -> Self {
        let mut registry = TemplateRegistry::default();
        for (file, source) in BUILTIN {
            let t = parse_template(source, file).expect("builtin template parses");
            registry.templates.insert(t.template_id.clone(), t);
        }
        registry
    }

    /// Read every `*.txt` in a directory as a template.
    pub fn load_dir(dir: &Path) -> Result<Self, BenchError> {
        let mut registry = TemplateRegistry::default();
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| BenchError::TemplateFormat {
                origin: dir.display().to_string(),
                reason: e.to_string(),
            })?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().and_then(|s| s.to_str()) == Some("txt"))
            .collect();
        entries.sort();
        for path in entries {
            let source = std::fs::read_to_string(&path).map_err(|e| BenchError::TemplateFormat {
                origin: path.display().to_string(),
                reason: e.to_string(),
            })?;
            let t = parse_template(&source, &path.display().to_string())?;
            registry.templates.insert(t.template_id.clone(), t);
        }
        Ok(registry)
    }

    /// Export all templates as front-matter files into a directory.
    pub fn export_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for t in self.templates.values() {
            let placeholders: Vec<&str> = t.required.iter().map(String::as_str).collect();
            let content = format!(
                "---\nid: {}\nplaceholders: {}\n---\n{}\n",
                t.template_id,
                placeholders.join(", "),
                t.body
            );
            std::fs::write(dir.join(format!("{}.txt", t.template_id)), content)?;
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&PromptTemplate, BenchError> {
        self.templates
            .get(id)
            .ok_or_else(|| BenchError::UnknownTemplate(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}

/// Convenience: build the variable map literal.
#[macro_export]
macro_rules! template_vars {
    ($($name:literal => $value:expr),* $(,)?) => {{
        let mut map: std::collections::BTreeMap<&str, String> = std::collections::BTreeMap::new();
        $(map.insert($name, $value.to_string());)*
        map
    }};
}
