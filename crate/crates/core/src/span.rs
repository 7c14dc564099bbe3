//! Source positions for diagnostics.
//!
//! Positions are 1-based lines and columns, inclusive on both ends. Every AST
//! node carries exactly one span; the file name lives with the program (one
//! source file per parse), not in every span.

/// A contiguous region of source text, 1-based, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SourceSpan {
    pub line_start: u32,
    pub col_start: u32,
    pub line_end: u32,
    pub col_end: u32,
}

impl SourceSpan {
    /// Placeholder span for synthesized nodes (pretty-printer round trips,
    /// programmatic AST construction).
    pub const DUMMY: SourceSpan = SourceSpan {
        line_start: 0,
        col_start: 0,
        line_end: 0,
        col_end: 0,
    };

    pub fn new(line_start: u32, col_start: u32, line_end: u32, col_end: u32) -> Self {
        debug_assert!(
            (line_start, col_start) <= (line_end, col_end),
            "span start must not follow its end"
        );
        SourceSpan {
            line_start,
            col_start,
            line_end,
            col_end,
        }
    }

    /// Single-position span.
    pub fn point(line: u32, col: u32) -> Self {
        Self::new(line, col, line, col)
    }

    /// Smallest span covering both `self` and `other`.
    pub fn join(self, other: SourceSpan) -> SourceSpan {
        if self == SourceSpan::DUMMY {
            return other;
        }
        if other == SourceSpan::DUMMY {
            return self;
        }
        let (line_start, col_start) =
            (self.line_start, self.col_start).min((other.line_start, other.col_start));
        let (line_end, col_end) =
            (self.line_end, self.col_end).max((other.line_end, other.col_end));
        SourceSpan {
            line_start,
            col_start,
            line_end,
            col_end,
        }
    }
}

impl std::fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line_start, self.col_start)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn join_covers_both() {
        let a = SourceSpan::new(1, 4, 1, 9);
        let b = SourceSpan::new(2, 1, 2, 3);
        assert_eq!(a.join(b), SourceSpan::new(1, 4, 2, 3));
        assert_eq!(b.join(a), SourceSpan::new(1, 4, 2, 3));
    }

    #[test]
    fn join_with_dummy_is_identity() {
        let a = SourceSpan::new(3, 2, 3, 8);
        assert_eq!(a.join(SourceSpan::DUMMY), a);
        assert_eq!(SourceSpan::DUMMY.join(a), a);
    }
}
