//! Prompt rendering from versioned text templates.
//!
//! Templates live in `assets/templates/` next to a manifest listing each template's
//! id, game, role and placeholders. Every record stores the SHA-256 of the template
//! body it was rendered from.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::games::{Condition, Domain, GameConfig, GameError, GgConfig, Role, UgConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("responder config for pool {0} has no probed offer")]
    MissingProbedOffer(u32),
    #[error("template `{template}` has unbound placeholder {{{name}}}")]
    UnboundPlaceholder { template: String, name: String },
    #[error(transparent)]
    InvalidConfig(#[from] GameError),
}

/// Identity adopted under a gendered condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Persona {
    pub name: &'static str,
    pub pronouns: &'static str,
}

impl Persona {
    pub fn for_condition(condition: Condition) -> Option<Persona> {
        match condition {
            Condition::Neutral => None,
            Condition::Male => Some(Persona { name: "Joseph", pronouns: "he/him" }),
            Condition::Female => Some(Persona { name: "Kelly", pronouns: "she/her" }),
        }
    }

    pub fn preamble(&self) -> String {
        MANIFEST.persona_preamble.replace("{name}", self.name).replace("{pronouns}", self.pronouns)
    }
}

/// Template manifest entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateInfo {
    pub id: String,
    pub game: String,
    pub role: Option<String>,
    pub file: String,
    pub placeholders: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
struct Manifest {
    version: u32,
    persona_preamble: String,
    templates: Vec<TemplateInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptTemplate {
    pub info: TemplateInfo,
    pub body: &'static str,
    pub hash: String,
}

static MANIFEST: LazyLock<Manifest> = LazyLock::new(|| {
    serde_json::from_str(include_str!("../assets/templates/manifest.json")).expect("bundled manifest is valid")
});

static TEMPLATES: LazyLock<BTreeMap<String, PromptTemplate>> = LazyLock::new(|| {
    let bodies: [(&str, &'static str); 5] = [
        ("ug_proposer.txt", include_str!("../assets/templates/ug_proposer.txt")),
        ("ug_responder.txt", include_str!("../assets/templates/ug_responder.txt")),
        ("gg_gain.txt", include_str!("../assets/templates/gg_gain.txt")),
        ("gg_loss.txt", include_str!("../assets/templates/gg_loss.txt")),
        ("gg_mixed.txt", include_str!("../assets/templates/gg_mixed.txt")),
    ];
    MANIFEST
        .templates
        .iter()
        .map(|info| {
            let body = bodies
                .iter()
                .find(|(f, _)| *f == info.file)
                .map(|(_, b)| *b)
                .unwrap_or_else(|| panic!("template file {} not bundled", info.file));
            let tpl = PromptTemplate { info: info.clone(), body, hash: sha256_hex(body.as_bytes()) };
            (info.id.clone(), tpl)
        })
        .collect()
});

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([a-z_]+)\}").unwrap());

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Version of the bundled template set.
pub fn template_set_version() -> u32 {
    MANIFEST.version
}

pub fn templates() -> impl Iterator<Item = &'static PromptTemplate> {
    TEMPLATES.values()
}

pub fn template(id: &str) -> Option<&'static PromptTemplate> {
    TEMPLATES.get(id)
}

/// Template used for a config.
pub fn template_for(config: &GameConfig) -> &'static PromptTemplate {
    let id = match config {
        GameConfig::Ug(c) if c.role == Role::Proposer => "ug_proposer",
        GameConfig::Ug(_) => "ug_responder",
        GameConfig::Gg(c) => match c.domain {
            Domain::Gain => "gg_gain",
            Domain::Loss => "gg_loss",
            Domain::Mixed => "gg_mixed",
        },
    };
    &TEMPLATES[id]
}

/// Substitute every `{name}` in the template; all placeholders must be bound.
pub fn render(template: &PromptTemplate, bindings: &BTreeMap<&str, String>) -> Result<String, PromptError> {
    let mut unbound = None;
    let out = PLACEHOLDER.replace_all(template.body, |caps: &regex::Captures| match bindings.get(&caps[1]) {
        Some(v) => v.clone(),
        None => {
            unbound.get_or_insert_with(|| caps[1].to_string());
            String::new()
        }
    });
    match unbound {
        Some(name) => Err(PromptError::UnboundPlaceholder { template: template.info.id.clone(), name }),
        None => Ok(out.into_owned()),
    }
}

/// Monetary amount with at most four decimals and a typographic minus sign.
pub fn format_amount(x: f64) -> String {
    let mut s = format!("{:.4}", x.abs());
    if s.contains('.') {
        s = s.trim_end_matches('0').trim_end_matches('.').to_string();
    }
    if x < 0.0 && s != "0" {
        format!("−{s}")
    } else {
        s
    }
}

pub fn format_percent(p: f64) -> String {
    format!("{}%", format_amount(p * 100.0))
}

fn persona_binding(condition: Condition) -> String {
    Persona::for_condition(condition).map(|p| p.preamble()).unwrap_or_default()
}

pub fn render_ug_prompt(config: &UgConfig, condition: Condition) -> Result<String, PromptError> {
    if config.role == Role::Responder && config.probed_offer.is_none() {
        return Err(PromptError::MissingProbedOffer(config.pool));
    }
    config.validate()?;
    let mut b = BTreeMap::from([("persona", persona_binding(condition)), ("pool", config.pool.to_string())]);
    if let Some(offer) = config.probed_offer {
        b.insert("offer", offer.to_string());
        b.insert("keep", (config.pool - offer).to_string());
    }
    render(template_for(&GameConfig::Ug(*config)), &b)
}

pub fn render_gg_prompt(config: &GgConfig, condition: Condition) -> Result<String, PromptError> {
    config.validate()?;
    let b = BTreeMap::from([
        ("persona", persona_binding(condition)),
        ("magnitude", format_amount(config.magnitude)),
        ("probability", format_percent(config.probability)),
        ("complement", format_percent(1.0 - config.probability)),
        ("sure", format_amount(config.sure_amount)),
    ]);
    render(template_for(&GameConfig::Gg(*config)), &b)
}

pub fn render_prompt(config: &GameConfig, condition: Condition) -> Result<String, PromptError> {
    match config {
        GameConfig::Ug(c) => render_ug_prompt(c, condition),
        GameConfig::Gg(c) => render_gg_prompt(c, condition),
    }
}

/// Phrase that distinguishes proposer prompts from responder prompts.
pub fn role_marker(role: Role) -> &'static str {
    match role {
        Role::Proposer => "as the proposer.",
        Role::Responder => "as the responder.",
    }
}
