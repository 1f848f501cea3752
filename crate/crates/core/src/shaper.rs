//! Arabic contextual shaping.
//!
//! Text enters in logical order (first-read letter first). Each letter gets
//! one of up to four presentation forms depending on its own joining class
//! and on whether its neighbours can connect to it. LAM followed by a letter
//! from the ALEF family is then replaced by the mandatory LAM-ALEF ligature.
//! A word splits into paws (parts of an Arabic word) wherever a letter cannot
//! connect to the letter that follows it.

use std::fmt;
use std::ops::Range;

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// The 28 base letters of the Arabic alphabet, in traditional order.
pub const BASE_LETTERS: [char; 28] = [
    '\u{0627}', // ALEF
    '\u{0628}', // BEH
    '\u{062A}', // TEH
    '\u{062B}', // THEH
    '\u{062C}', // JEEM
    '\u{062D}', // HAH
    '\u{062E}', // KHAH
    '\u{062F}', // DAL
    '\u{0630}', // THAL
    '\u{0631}', // REH
    '\u{0632}', // ZAIN
    '\u{0633}', // SEEN
    '\u{0634}', // SHEEN
    '\u{0635}', // SAD
    '\u{0636}', // DAD
    '\u{0637}', // TAH
    '\u{0638}', // ZAH
    '\u{0639}', // AIN
    '\u{063A}', // GHAIN
    '\u{0641}', // FEH
    '\u{0642}', // QAF
    '\u{0643}', // KAF
    '\u{0644}', // LAM
    '\u{0645}', // MEEM
    '\u{0646}', // NOON
    '\u{0647}', // HEH
    '\u{0648}', // WAW
    '\u{064A}', // YEH
];

/// Letters accepted beyond the base alphabet: TEH MARBUTA, the ALEF variants
/// and HAMZA.
pub const EXTRA_LETTERS: [char; 5] = [
    '\u{0629}', // TEH MARBUTA
    '\u{0622}', // ALEF WITH MADDA ABOVE
    '\u{0623}', // ALEF WITH HAMZA ABOVE
    '\u{0625}', // ALEF WITH HAMZA BELOW
    '\u{0621}', // HAMZA
];

pub const LAM: char = '\u{0644}';
pub const ALEF_FAMILY: [char; 4] = ['\u{0627}', '\u{0622}', '\u{0623}', '\u{0625}'];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapeError {
    #[error("unsupported character {ch:?} (U+{:04X}) at index {index}", *ch as u32)]
    Unsupported { index: usize, ch: char },
    #[error("empty text")]
    Empty,
    #[error("expected a single word but found a space at index {index}")]
    NotAWord { index: usize },
}

/// How a letter connects to its neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JoiningClass {
    /// Connects to both the preceding and the following letter.
    DualJoining,
    /// Connects only to the preceding letter.
    RightJoiningOnly,
    NonJoining,
}

impl JoiningClass {
    /// Whether a letter of this class can connect to the letter after it.
    pub fn joins_following(self) -> bool {
        matches!(self, JoiningClass::DualJoining)
    }

    /// Whether a letter of this class can connect to the letter before it.
    pub fn joins_preceding(self) -> bool {
        matches!(self, JoiningClass::DualJoining | JoiningClass::RightJoiningOnly)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PresentationForm {
    Isolated,
    Initial,
    Medial,
    Final,
}

impl PresentationForm {
    pub const ALL: [PresentationForm; 4] = [
        PresentationForm::Isolated,
        PresentationForm::Initial,
        PresentationForm::Medial,
        PresentationForm::Final,
    ];

    fn from_joins(joins_prev: bool, joins_next: bool) -> Self {
        match (joins_prev, joins_next) {
            (false, false) => PresentationForm::Isolated,
            (false, true) => PresentationForm::Initial,
            (true, true) => PresentationForm::Medial,
            (true, false) => PresentationForm::Final,
        }
    }

    /// True when the glyph connects to the glyph after it in logical order.
    pub fn joins_following(self) -> bool {
        matches!(self, PresentationForm::Initial | PresentationForm::Medial)
    }

    /// True when the glyph connects to the glyph before it in logical order.
    pub fn joins_preceding(self) -> bool {
        matches!(self, PresentationForm::Medial | PresentationForm::Final)
    }

    pub fn name(self) -> &'static str {
        match self {
            PresentationForm::Isolated => "isolated",
            PresentationForm::Initial => "initial",
            PresentationForm::Medial => "medial",
            PresentationForm::Final => "final",
        }
    }
}

impl fmt::Display for PresentationForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A supported Arabic letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter(char);

impl Letter {
    pub fn new(ch: char) -> Result<Self, ShapeError> {
        Self::try_from_char(ch).ok_or(ShapeError::Unsupported { index: 0, ch })
    }

    fn try_from_char(ch: char) -> Option<Self> {
        (BASE_LETTERS.contains(&ch) || EXTRA_LETTERS.contains(&ch)).then_some(Letter(ch))
    }

    pub fn as_char(self) -> char {
        self.0
    }

    pub fn joining_class(self) -> JoiningClass {
        match self.0 {
            // ALEF and variants, DAL, THAL, REH, ZAIN, WAW, TEH MARBUTA
            '\u{0627}' | '\u{0622}' | '\u{0623}' | '\u{0625}' | '\u{062F}' | '\u{0630}'
            | '\u{0631}' | '\u{0632}' | '\u{0648}' | '\u{0629}' => JoiningClass::RightJoiningOnly,
            '\u{0621}' => JoiningClass::NonJoining,
            _ => JoiningClass::DualJoining,
        }
    }

    /// Stable index over the supported repertoire (base letters first).
    pub fn ordinal(self) -> usize {
        BASE_LETTERS
            .iter()
            .chain(EXTRA_LETTERS.iter())
            .position(|&c| c == self.0)
            .expect("letter is always in the repertoire")
    }

    pub fn all() -> impl Iterator<Item = Letter> {
        BASE_LETTERS
            .iter()
            .chain(EXTRA_LETTERS.iter())
            .map(|&c| Letter(c))
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Joining class of an arbitrary character.
pub fn joining_class(ch: char) -> Result<JoiningClass, ShapeError> {
    Letter::new(ch).map(Letter::joining_class)
}

/// Mandatory ligatures: LAM followed by one of the ALEF family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LigatureId {
    LamAlef,
    LamAlefMadda,
    LamAlefHamzaAbove,
    LamAlefHamzaBelow,
}

impl LigatureId {
    pub const ALL: [LigatureId; 4] = [
        LigatureId::LamAlef,
        LigatureId::LamAlefMadda,
        LigatureId::LamAlefHamzaAbove,
        LigatureId::LamAlefHamzaBelow,
    ];

    fn for_pair(first: Letter, second: Letter) -> Option<Self> {
        if first.0 != LAM {
            return None;
        }
        match second.0 {
            '\u{0627}' => Some(LigatureId::LamAlef),
            '\u{0622}' => Some(LigatureId::LamAlefMadda),
            '\u{0623}' => Some(LigatureId::LamAlefHamzaAbove),
            '\u{0625}' => Some(LigatureId::LamAlefHamzaBelow),
            _ => None,
        }
    }

    /// The two letters the ligature stands for, in logical order.
    pub fn letters(self) -> [Letter; 2] {
        let alef = match self {
            LigatureId::LamAlef => '\u{0627}',
            LigatureId::LamAlefMadda => '\u{0622}',
            LigatureId::LamAlefHamzaAbove => '\u{0623}',
            LigatureId::LamAlefHamzaBelow => '\u{0625}',
        };
        [Letter(LAM), Letter(alef)]
    }
}

impl fmt::Display for LigatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b] = self.letters();
        write!(f, "{a}{b}")
    }
}

/// What a shaped glyph depicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GlyphBase {
    Letter(Letter),
    Ligature(LigatureId),
    Space,
}

impl fmt::Display for GlyphBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GlyphBase::Letter(l) => write!(f, "{l}"),
            GlyphBase::Ligature(l) => write!(f, "{l}"),
            GlyphBase::Space => f.write_str(" "),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapedGlyph {
    pub base: GlyphBase,
    pub form: PresentationForm,
    /// Indices of the normalized input covered by this glyph.
    pub source_span: Range<usize>,
}

impl ShapedGlyph {
    /// The joining class governing the glyph's trailing edge.
    pub fn trailing_class(&self) -> JoiningClass {
        match self.base {
            GlyphBase::Letter(l) => l.joining_class(),
            GlyphBase::Ligature(lig) => lig.letters()[1].joining_class(),
            GlyphBase::Space => JoiningClass::NonJoining,
        }
    }
}

/// One cursively connected run of glyphs inside a word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Paw {
    pub glyphs: Vec<ShapedGlyph>,
}

impl Paw {
    pub fn source_span(&self) -> Range<usize> {
        let start = self.glyphs.first().map_or(0, |g| g.source_span.start);
        let end = self.glyphs.last().map_or(0, |g| g.source_span.end);
        start..end
    }
}

/// A unit of normalized input text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symbol {
    Letter(Letter),
    Space,
}

fn is_stripped_mark(ch: char) -> bool {
    // harakat, Quranic marks, superscript alef, tatweel
    matches!(ch, '\u{064B}'..='\u{065F}' | '\u{0670}' | '\u{0640}')
}

/// NFC-normalizes a label and removes vowel diacritics.
pub fn normalize_label(text: &str) -> String {
    text.nfc().filter(|&c| !is_stripped_mark(c)).collect()
}

/// Normalizes `text` and maps every character to a [`Symbol`]. Error
/// indices refer to character positions in the normalized text.
pub fn parse_text(text: &str) -> Result<Vec<Symbol>, ShapeError> {
    normalize_label(text)
        .chars()
        .enumerate()
        .map(|(index, ch)| {
            if ch == ' ' {
                Ok(Symbol::Space)
            } else {
                Letter::try_from_char(ch)
                    .map(Symbol::Letter)
                    .ok_or(ShapeError::Unsupported { index, ch })
            }
        })
        .collect()
}

/// Assigns presentation forms without ligature substitution.
pub fn assign_forms(symbols: &[Symbol]) -> Vec<ShapedGlyph> {
    let class_at = |i: usize| match symbols[i] {
        Symbol::Letter(l) => l.joining_class(),
        Symbol::Space => JoiningClass::NonJoining,
    };
    (0..symbols.len())
        .map(|i| match symbols[i] {
            Symbol::Space => ShapedGlyph {
                base: GlyphBase::Space,
                form: PresentationForm::Isolated,
                source_span: i..i + 1,
            },
            Symbol::Letter(letter) => {
                let own = letter.joining_class();
                let joins_prev =
                    i > 0 && own.joins_preceding() && class_at(i - 1).joins_following();
                let joins_next = i + 1 < symbols.len()
                    && own.joins_following()
                    && class_at(i + 1).joins_preceding();
                ShapedGlyph {
                    base: GlyphBase::Letter(letter),
                    form: PresentationForm::from_joins(joins_prev, joins_next),
                    source_span: i..i + 1,
                }
            }
        })
        .collect()
}

/// Shapes logical-order text into glyphs with contextual forms and
/// mandatory ligatures applied.
pub fn shape(text: &str) -> Result<Vec<ShapedGlyph>, ShapeError> {
    let symbols = parse_text(text)?;
    if symbols.is_empty() {
        return Err(ShapeError::Empty);
    }
    Ok(apply_ligatures(assign_forms(&symbols)))
}

/// Replaces each joined LAM + ALEF-family pair with its ligature glyph.
pub fn apply_ligatures(shaped: Vec<ShapedGlyph>) -> Vec<ShapedGlyph> {
    let mut out = Vec::with_capacity(shaped.len());
    let mut iter = shaped.into_iter().peekable();
    while let Some(glyph) = iter.next() {
        let ligature = match (&glyph.base, iter.peek()) {
            (GlyphBase::Letter(first), Some(next)) if glyph.form.joins_following() => {
                match next.base {
                    GlyphBase::Letter(second) if next.form.joins_preceding() => {
                        LigatureId::for_pair(*first, second)
                    }
                    _ => None,
                }
            }
            _ => None,
        };
        match ligature {
            Some(lig) => {
                let second = iter.next().expect("peeked");
                let form = if glyph.form == PresentationForm::Initial {
                    PresentationForm::Isolated
                } else {
                    PresentationForm::Final
                };
                out.push(ShapedGlyph {
                    base: GlyphBase::Ligature(lig),
                    form,
                    source_span: glyph.source_span.start..second.source_span.end,
                });
            }
            None => out.push(glyph),
        }
    }
    out
}

/// Splits a single word into paws.
pub fn segment_paws(word: &str) -> Result<Vec<Paw>, ShapeError> {
    let symbols = parse_text(word)?;
    if symbols.is_empty() {
        return Err(ShapeError::Empty);
    }
    if let Some(index) = symbols.iter().position(|s| *s == Symbol::Space) {
        return Err(ShapeError::NotAWord { index });
    }
    let glyphs = apply_ligatures(assign_forms(&symbols));
    Ok(split_paws(glyphs))
}

/// Groups an already shaped word into paws: a paw ends at every glyph that
/// does not connect to its successor.
pub fn split_paws(glyphs: Vec<ShapedGlyph>) -> Vec<Paw> {
    let mut paws = Vec::new();
    let mut current = Vec::new();
    for glyph in glyphs {
        let ends = !glyph.form.joins_following();
        current.push(glyph);
        if ends {
            paws.push(Paw {
                glyphs: std::mem::take(&mut current),
            });
        }
    }
    if !current.is_empty() {
        paws.push(Paw { glyphs: current });
    }
    paws
}
