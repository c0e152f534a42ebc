//! Text form of pipeline configurations.
//!
//! The grammar is line oriented. Four sections group the keys:
//!
//! ```text
//! [pipeline]
//! order = align_then_attend | attend_then_align
//! shots = mean_features | mean_outputs
//!
//! [alignment]
//! query   = none | dot_product | softmax_dot_product(<scale> | auto)
//! support = (same values)
//!
//! [attention]
//! query   = none | support_pool_reweight(max | avg)
//!         | background_attenuation | similarity_reweight
//! support = (same values)
//!
//! [fusion]
//! pool       = none | max | avg
//! components = [mul, sub, add, id, cat, learnable(<op>)]
//! ```
//!
//! Dotted keys (`alignment.query = none`) work without a section header,
//! and the shorthand `fusion = [mul, sub, id]` assigns the component list.
//! `#` starts a comment; blank lines are skipped. Every key is optional
//! and defaults to the pass-through pipeline. Assigning a key or opening a
//! section twice is an error.

use std::fmt::{self, Write as _};

use crate::error::AafError;
use crate::ops::{AffinityKind, AffinityScale, AttentionKind, FusionComponent, FusionOp};
use crate::pipeline::{OpOrder, PipelineConfig, ShapeReport, ShotAggregation};
use crate::tape::PoolMode;

/// Rejection with a source position and a hint at what was expected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line number.
    pub line: usize,
    /// 1-based character column.
    pub column: usize,
    pub message: String,
    pub expected: Option<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)?;
        if let Some(expected) = &self.expected {
            write!(f, " (expected {expected})")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

const EXPECT_SECTION: &str = "[pipeline], [alignment], [attention], or [fusion]";
const EXPECT_ORDER: &str = "align_then_attend or attend_then_align";
const EXPECT_SHOTS: &str = "mean_features or mean_outputs";
const EXPECT_ALIGN: &str = "none, dot_product, or softmax_dot_product(<scale>|auto)";
const EXPECT_ATTEND: &str =
    "none, support_pool_reweight(max|avg), background_attenuation, or similarity_reweight";
const EXPECT_POOL: &str = "none, max, or avg";
const EXPECT_COMPONENT: &str = "mul, sub, add, id, cat, or learnable(<op>)";
const EXPECT_COMPONENTS: &str = "a bracketed list like [mul, sub, id]";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Pipeline,
    Alignment,
    Attention,
    Fusion,
}

impl Section {
    fn from_name(name: &str) -> Option<Section> {
        match name {
            "pipeline" => Some(Section::Pipeline),
            "alignment" => Some(Section::Alignment),
            "attention" => Some(Section::Attention),
            "fusion" => Some(Section::Fusion),
            _ => None,
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    fn keys(self) -> &'static str {
        match self {
            Section::Pipeline => "order or shots",
            Section::Alignment | Section::Attention => "query or support",
            Section::Fusion => "pool or components",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Order,
    Shots,
    AlignQuery,
    AlignSupport,
    AttendQuery,
    AttendSupport,
    FusionPool,
    FusionComponents,
}

impl Field {
    fn index(self) -> usize {
        self as usize
    }

    fn qualified(self) -> &'static str {
        match self {
            Field::Order => "pipeline.order",
            Field::Shots => "pipeline.shots",
            Field::AlignQuery => "alignment.query",
            Field::AlignSupport => "alignment.support",
            Field::AttendQuery => "attention.query",
            Field::AttendSupport => "attention.support",
            Field::FusionPool => "fusion.pool",
            Field::FusionComponents => "fusion.components",
        }
    }
}

fn field_for(section: Section, key: &str) -> Option<Field> {
    match (section, key) {
        (Section::Pipeline, "order") => Some(Field::Order),
        (Section::Pipeline, "shots") => Some(Field::Shots),
        (Section::Alignment, "query") => Some(Field::AlignQuery),
        (Section::Alignment, "support") => Some(Field::AlignSupport),
        (Section::Attention, "query") => Some(Field::AttendQuery),
        (Section::Attention, "support") => Some(Field::AttendSupport),
        (Section::Fusion, "pool") => Some(Field::FusionPool),
        (Section::Fusion, "components") => Some(Field::FusionComponents),
        _ => None,
    }
}

/// A value-level rejection: byte offset inside the value text plus reason.
struct ValueError {
    offset: usize,
    message: String,
    expected: String,
}

impl ValueError {
    fn new(offset: usize, message: impl Into<String>, expected: &str) -> Self {
        ValueError {
            offset,
            message: message.into(),
            expected: expected.to_string(),
        }
    }
}

/// Splits `name(arg)`; `Ok(None)` when there is no parenthesis at all.
fn split_call(value: &str) -> Result<Option<(&str, &str)>, ValueError> {
    let Some(open) = value.find('(') else {
        return Ok(None);
    };
    if !value.ends_with(')') {
        return Err(ValueError::new(
            value.len(),
            "missing closing \")\"".to_string(),
            "a \")\" closing the argument",
        ));
    }
    Ok(Some((&value[..open], &value[open + 1..value.len() - 1])))
}

fn parse_order(value: &str) -> Result<OpOrder, ValueError> {
    match value {
        "align_then_attend" => Ok(OpOrder::AlignThenAttend),
        "attend_then_align" => Ok(OpOrder::AttendThenAlign),
        other => Err(ValueError::new(
            0,
            format!("unknown order {other:?}"),
            EXPECT_ORDER,
        )),
    }
}

fn parse_shots(value: &str) -> Result<ShotAggregation, ValueError> {
    match value {
        "mean_features" => Ok(ShotAggregation::MeanFeatures),
        "mean_outputs" => Ok(ShotAggregation::MeanOutputs),
        other => Err(ValueError::new(
            0,
            format!("unknown shot aggregation {other:?}"),
            EXPECT_SHOTS,
        )),
    }
}

fn parse_align(value: &str) -> Result<AffinityKind, ValueError> {
    match split_call(value)? {
        None => match value {
            "none" => Ok(AffinityKind::Identity),
            "dot_product" => Ok(AffinityKind::DotProduct),
            other => Err(ValueError::new(
                0,
                format!("unknown alignment {other:?}"),
                EXPECT_ALIGN,
            )),
        },
        Some(("softmax_dot_product", arg)) => {
            let arg_offset = "softmax_dot_product(".len();
            let scale = if arg == "auto" {
                AffinityScale::InvSqrtChannels
            } else {
                let parsed: f64 = arg.parse().map_err(|_| {
                    ValueError::new(
                        arg_offset,
                        format!("bad scale {arg:?}"),
                        "a positive number or auto",
                    )
                })?;
                if !parsed.is_finite() || parsed <= 0.0 {
                    return Err(ValueError::new(
                        arg_offset,
                        format!("scale must be positive, got {arg:?}"),
                        "a positive number or auto",
                    ));
                }
                AffinityScale::Fixed(parsed)
            };
            Ok(AffinityKind::SoftmaxDotProduct { scale })
        }
        Some((other, _)) => Err(ValueError::new(
            0,
            format!("unknown alignment {other:?}"),
            EXPECT_ALIGN,
        )),
    }
}

fn parse_attention(value: &str) -> Result<AttentionKind, ValueError> {
    match split_call(value)? {
        None => match value {
            "none" => Ok(AttentionKind::None),
            "background_attenuation" => Ok(AttentionKind::BackgroundAttenuation),
            "similarity_reweight" => Ok(AttentionKind::SimilarityReweight),
            other => Err(ValueError::new(
                0,
                format!("unknown attention {other:?}"),
                EXPECT_ATTEND,
            )),
        },
        Some(("support_pool_reweight", arg)) => {
            let arg_offset = "support_pool_reweight(".len();
            let mode = match arg {
                "max" => PoolMode::Max,
                "avg" => PoolMode::Avg,
                other => {
                    return Err(ValueError::new(
                        arg_offset,
                        format!("unknown pooling mode {other:?}"),
                        "max or avg",
                    ))
                }
            };
            Ok(AttentionKind::SupportPoolReweight { mode })
        }
        Some((other, _)) => Err(ValueError::new(
            0,
            format!("unknown attention {other:?}"),
            EXPECT_ATTEND,
        )),
    }
}

fn parse_pool(value: &str) -> Result<Option<PoolMode>, ValueError> {
    match value {
        "none" => Ok(None),
        "max" => Ok(Some(PoolMode::Max)),
        "avg" => Ok(Some(PoolMode::Avg)),
        other => Err(ValueError::new(
            0,
            format!("unknown pool {other:?}"),
            EXPECT_POOL,
        )),
    }
}

fn parse_component(token: &str) -> Result<FusionComponent, ValueError> {
    let plain_op = |name: &str| match name {
        "mul" => Some(FusionOp::Mul),
        "sub" => Some(FusionOp::Sub),
        "add" => Some(FusionOp::Add),
        "id" => Some(FusionOp::Identity),
        "cat" => Some(FusionOp::Cat),
        _ => None,
    };
    match split_call(token)? {
        None => plain_op(token)
            .map(|op| FusionComponent {
                op,
                learnable: false,
            })
            .ok_or_else(|| {
                ValueError::new(
                    0,
                    format!("unknown operator {token:?}"),
                    EXPECT_COMPONENT,
                )
            }),
        Some(("learnable", arg)) => {
            let arg_offset = "learnable(".len();
            plain_op(arg)
                .map(|op| FusionComponent {
                    op,
                    learnable: true,
                })
                .ok_or_else(|| {
                    ValueError::new(
                        arg_offset,
                        format!("unknown operator {arg:?}"),
                        "mul, sub, add, id, or cat",
                    )
                })
        }
        Some((other, _)) => Err(ValueError::new(
            0,
            format!("unknown operator {other:?}"),
            EXPECT_COMPONENT,
        )),
    }
}

fn parse_components(value: &str) -> Result<Vec<FusionComponent>, ValueError> {
    if !value.starts_with('[') || !value.ends_with(']') || value.len() < 2 {
        return Err(ValueError::new(
            0,
            "components must be a bracketed list".to_string(),
            EXPECT_COMPONENTS,
        ));
    }
    let inner = &value[1..value.len() - 1];
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut components = Vec::new();
    let mut pos = 1; // byte offset just past '['
    for piece in inner.split(',') {
        let token = piece.trim();
        let token_offset = pos + (piece.len() - piece.trim_start().len());
        if token.is_empty() {
            return Err(ValueError::new(
                token_offset,
                "empty fusion component".to_string(),
                EXPECT_COMPONENT,
            ));
        }
        let component = parse_component(token).map_err(|e| ValueError {
            offset: token_offset + e.offset,
            ..e
        })?;
        components.push(component);
        pos += piece.len() + 1;
    }
    Ok(components)
}

struct Parser {
    config: PipelineConfig,
    assigned: [bool; 8],
    sections_seen: [bool; 4],
    section: Option<Section>,
}

impl Parser {
    fn new() -> Self {
        Parser {
            config: PipelineConfig::identity(),
            assigned: [false; 8],
            sections_seen: [false; 4],
            section: None,
        }
    }

    fn assign(
        &mut self,
        field: Field,
        value: &str,
        err: impl Fn(ValueError) -> ConfigError,
        duplicate: impl Fn() -> ConfigError,
    ) -> Result<(), ConfigError> {
        if self.assigned[field.index()] {
            return Err(duplicate());
        }
        self.assigned[field.index()] = true;
        let config = &mut self.config;
        match field {
            Field::Order => config.order = parse_order(value).map_err(err)?,
            Field::Shots => config.shots = parse_shots(value).map_err(err)?,
            Field::AlignQuery => config.align_query = parse_align(value).map_err(err)?,
            Field::AlignSupport => {
                config.align_support = parse_align(value).map_err(err)?
            }
            Field::AttendQuery => {
                config.attend_query = parse_attention(value).map_err(err)?
            }
            Field::AttendSupport => {
                config.attend_support = parse_attention(value).map_err(err)?
            }
            Field::FusionPool => {
                config.fusion.support_pool = parse_pool(value).map_err(err)?
            }
            Field::FusionComponents => {
                config.fusion.components = parse_components(value).map_err(err)?
            }
        }
        Ok(())
    }
}

fn char_column(raw: &str, byte: usize) -> usize {
    raw[..byte.min(raw.len())].chars().count() + 1
}

/// Parses a configuration; missing keys keep their pass-through defaults,
/// so the empty string parses to the identity pipeline.
pub fn parse(text: &str) -> Result<PipelineConfig, ConfigError> {
    let mut parser = Parser::new();
    for (index, raw) in text.lines().enumerate() {
        parse_line(&mut parser, index + 1, raw)?;
    }
    Ok(parser.config)
}

fn parse_line(parser: &mut Parser, line: usize, raw: &str) -> Result<(), ConfigError> {
    let code = match raw.find('#') {
        Some(i) => &raw[..i],
        None => raw,
    };
    let body = code.trim_end();
    let lead = body.len() - body.trim_start().len();
    let body = body.trim_start();
    if body.is_empty() {
        return Ok(());
    }
    // Column of a byte offset within `body`.
    let at = |offset: usize| char_column(raw, lead + offset);
    let fail = |offset: usize, message: String, expected: &str| ConfigError {
        line,
        column: at(offset),
        message,
        expected: Some(expected.to_string()),
    };

    if let Some(rest) = body.strip_prefix('[') {
        let Some(close) = rest.find(']') else {
            return Err(fail(
                body.len(),
                "missing \"]\" in section header".to_string(),
                EXPECT_SECTION,
            ));
        };
        let name = &rest[..close];
        let trailing = rest[close + 1..].trim();
        if !trailing.is_empty() {
            return Err(fail(
                1 + close + 1,
                format!("unexpected text after section header: {trailing:?}"),
                "nothing after \"]\"",
            ));
        }
        let Some(section) = Section::from_name(name) else {
            return Err(fail(
                1,
                format!("unknown section [{name}]"),
                EXPECT_SECTION,
            ));
        };
        if parser.sections_seen[section.index()] {
            return Err(fail(0, format!("duplicate section [{name}]"), "each section at most once"));
        }
        parser.sections_seen[section.index()] = true;
        parser.section = Some(section);
        return Ok(());
    }

    let Some(eq) = body.find('=') else {
        return Err(fail(
            0,
            "not a section header or assignment".to_string(),
            "\"key = value\" or a [section] header",
        ));
    };
    let key = body[..eq].trim_end();
    if key.is_empty() {
        return Err(fail(0, "missing key before \"=\"".to_string(), "a key name"));
    }
    let value_raw = &body[eq + 1..];
    let value_lead = value_raw.len() - value_raw.trim_start().len();
    let value = value_raw.trim();
    let value_base = eq + 1 + value_lead;
    if value.is_empty() {
        return Err(fail(value_base, "missing value".to_string(), "a value after \"=\""));
    }

    let field = if let Some(dot) = key.find('.') {
        let section_name = &key[..dot];
        let sub = &key[dot + 1..];
        let Some(section) = Section::from_name(section_name) else {
            return Err(fail(
                0,
                format!("unknown section {section_name:?} in dotted key"),
                "pipeline, alignment, attention, or fusion before the dot",
            ));
        };
        let Some(field) = field_for(section, sub) else {
            return Err(fail(
                dot + 1,
                format!("unknown key {sub:?} in [{section_name}]"),
                section.keys(),
            ));
        };
        field
    } else if key == "fusion" {
        // Shorthand: `fusion = [..]` assigns the component list.
        Field::FusionComponents
    } else if let Some(section) = parser.section {
        let Some(field) = field_for(section, key) else {
            return Err(fail(
                0,
                format!("unknown key {key:?} in the current section"),
                section.keys(),
            ));
        };
        field
    } else {
        return Err(fail(
            0,
            format!("key {key:?} outside any section"),
            "a [section] header first, or a dotted key like alignment.query",
        ));
    };

    parser.assign(
        field,
        value,
        |e| ConfigError {
            line,
            column: at(value_base + e.offset),
            message: e.message,
            expected: Some(e.expected),
        },
        || ConfigError {
            line,
            column: at(0),
            message: format!("duplicate assignment of {}", field.qualified()),
            expected: Some("each key at most once".to_string()),
        },
    )
}

fn align_text(kind: AffinityKind) -> String {
    match kind {
        AffinityKind::Identity => "none".to_string(),
        AffinityKind::DotProduct => "dot_product".to_string(),
        AffinityKind::SoftmaxDotProduct { scale } => match scale {
            AffinityScale::Fixed(c) => format!("softmax_dot_product({c})"),
            AffinityScale::InvSqrtChannels => "softmax_dot_product(auto)".to_string(),
        },
    }
}

fn attention_text(kind: AttentionKind) -> &'static str {
    match kind {
        AttentionKind::None => "none",
        AttentionKind::SupportPoolReweight {
            mode: PoolMode::Max,
        } => "support_pool_reweight(max)",
        AttentionKind::SupportPoolReweight {
            mode: PoolMode::Avg,
        } => "support_pool_reweight(avg)",
        AttentionKind::BackgroundAttenuation => "background_attenuation",
        AttentionKind::SimilarityReweight => "similarity_reweight",
    }
}

fn component_text(component: &FusionComponent) -> String {
    let op = match component.op {
        FusionOp::Mul => "mul",
        FusionOp::Sub => "sub",
        FusionOp::Add => "add",
        FusionOp::Identity => "id",
        FusionOp::Cat => "cat",
    };
    if component.learnable {
        format!("learnable({op})")
    } else {
        op.to_string()
    }
}

/// Canonical text for a configuration; `parse` recovers it exactly.
pub fn print_config(config: &PipelineConfig) -> String {
    let mut out = String::new();
    let order = match config.order {
        OpOrder::AlignThenAttend => "align_then_attend",
        OpOrder::AttendThenAlign => "attend_then_align",
    };
    let shots = match config.shots {
        ShotAggregation::MeanFeatures => "mean_features",
        ShotAggregation::MeanOutputs => "mean_outputs",
    };
    let pool = match config.fusion.support_pool {
        None => "none",
        Some(PoolMode::Max) => "max",
        Some(PoolMode::Avg) => "avg",
    };
    let components: Vec<String> =
        config.fusion.components.iter().map(component_text).collect();
    let _ = writeln!(out, "[pipeline]");
    let _ = writeln!(out, "order = {order}");
    let _ = writeln!(out, "shots = {shots}");
    let _ = writeln!(out);
    let _ = writeln!(out, "[alignment]");
    let _ = writeln!(out, "query = {}", align_text(config.align_query));
    let _ = writeln!(out, "support = {}", align_text(config.align_support));
    let _ = writeln!(out);
    let _ = writeln!(out, "[attention]");
    let _ = writeln!(out, "query = {}", attention_text(config.attend_query));
    let _ = writeln!(out, "support = {}", attention_text(config.attend_support));
    let _ = writeln!(out);
    let _ = writeln!(out, "[fusion]");
    let _ = writeln!(out, "pool = {pool}");
    let _ = writeln!(out, "components = [{}]", components.join(", "));
    out
}

/// Static feasibility check for the given `(positions, channels)` extents;
/// delegates to [`PipelineConfig::check_shapes`].
pub fn check_shapes(
    config: &PipelineConfig,
    query: (usize, usize),
    support: (usize, usize),
) -> Result<ShapeReport, AafError> {
    config.check_shapes(query.0, support.0, query.1, support.1)
}
