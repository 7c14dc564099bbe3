//! Diagnostics: spanned errors and warnings rendered as
//! `file:line:col: severity: message`.

use crate::span::SourceSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

impl std::fmt::Display for Severity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Severity::Error => write!(f, "error"),
            Severity::Warning => write!(f, "warning"),
        }
    }
}

/// Machine-readable diagnostic categories. The rendered message carries the
/// human text; tests match on the code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagCode {
    // tokenizer
    UnrecognizedCharacter,
    UnterminatedString,
    // parser
    ParseError,
    MismatchedEndName,
    UnclosedBlock,
    DuplicateDeclaration,
    // resolver
    UnknownIdentifier,
    RankMismatch,
    MixedCalculationKind,
    ReservedName,
    UnsupportedConstruct,
    // index checking
    FreeIndexMismatch,
    IndexTripled,
    // expansion
    DuplicateComponentTarget,
    // stencils
    MalformedStencilExpr,
    NonRationalCoefficient,
    InfeasibleStencil,
    InconsistentStencil,
    MissingDerivativeDefinition,
    // lowering
    IntraKernelRecurrence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagCode,
    pub message: String,
    pub span: SourceSpan,
}

impl Diagnostic {
    pub fn error(code: DiagCode, span: SourceSpan, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            code,
            message: message.into(),
            span,
        }
    }

    pub fn warning(code: DiagCode, span: SourceSpan, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            code,
            message: message.into(),
            span,
        }
    }

    /// Render as `file:line:col: severity: message`.
    pub fn render(&self, file: &str) -> String {
        format!(
            "{}:{}:{}: {}: {}",
            file, self.span.line_start, self.span.col_start, self.severity, self.message
        )
    }
}

/// Result alias for stages that stop at the first error.
pub type DiagResult<T> = Result<T, Diagnostic>;
