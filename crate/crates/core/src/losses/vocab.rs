/// Character vocabulary: `a`-`z` at 0..=25, then space, pad, sos, eos.
///
/// The pad symbol doubles as the CTC blank.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CharVocab;

impl CharVocab {
    pub const SIZE: usize = 30;
    pub const SPACE: usize = 26;
    pub const PAD: usize = 27;
    pub const SOS: usize = 28;
    pub const EOS: usize = 29;
    pub const BLANK: usize = Self::PAD;

    pub fn index(c: char) -> Option<usize> {
        match c {
            'a'..='z' => Some(c as usize - 'a' as usize),
            ' ' => Some(Self::SPACE),
            _ => None,
        }
    }

    /// Printable character for an index; `None` for pad, sos and eos.
    pub fn symbol(index: usize) -> Option<char> {
        match index {
            0..=25 => Some((b'a' + index as u8) as char),
            Self::SPACE => Some(' '),
            _ => None,
        }
    }

    pub fn is_special(index: usize) -> bool {
        matches!(index, Self::PAD | Self::SOS | Self::EOS)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_map_is_bijective_on_printables() {
        for i in 0..=CharVocab::SPACE {
            let c = CharVocab::symbol(i).unwrap();
            assert_eq!(CharVocab::index(c), Some(i));
        }
        for i in [CharVocab::PAD, CharVocab::SOS, CharVocab::EOS] {
            assert!(CharVocab::symbol(i).is_none());
            assert!(CharVocab::is_special(i));
        }
        assert_eq!(CharVocab::SIZE, 30);
        assert_eq!(CharVocab::index('A'), None);
    }
}
