//! Reference data: the five-gene example with 16 polymorphic sites and the
//! published pooled frequency vectors of the turtle and HIV data sets.

use crate::alignment::Alignment;

/// Five sequences over the 16 polymorphic sites of the classic worked example.
pub const WORKED_FASTA: &str = "\
>a
TCTACCTCCTCGGTTA
>b
TCCTACCTCCTGGTTT
>c
CTCCCCCTCTTTGCTA
>d
CTCCCCCTTCTGACTT
>e
CTCCCTCTTTTGGCCA
";

/// Per-site pairwise difference counts printed under the example table.
pub const WORKED_PAIR_DIFFS: [u64; 16] = [6, 6, 4, 7, 4, 4, 4, 4, 6, 6, 4, 4, 4, 6, 4, 6];

/// 1-based singleton columns of the example table.
pub const WORKED_SINGLETONS: [usize; 9] = [3, 5, 6, 7, 8, 11, 12, 13, 15];

/// Pooled `(A, C, G, T)` frequencies reported for the turtle data.
pub const TURTLE_SEGREGATING: [f64; 4] = [0.8571, 0.1429, 0.0, 0.0];
pub const TURTLE_NON_SEGREGATING: [f64; 4] = [0.3913, 0.2727, 0.2372, 0.0988];

/// Pooled `(A, C, G, T)` frequencies reported for the HIV data.
pub const HIV_SEGREGATING: [f64; 4] = [0.4091, 0.1364, 0.4545, 0.0];
pub const HIV_NON_SEGREGATING: [f64; 4] = [0.4550, 0.1327, 0.1706, 0.2417];

pub fn worked_example() -> Alignment {
    Alignment::from_fasta_str(WORKED_FASTA).expect("fixture parses")
}

/// Two sequences whose 10,000 constant columns pool exactly to
/// [`TURTLE_NON_SEGREGATING`], followed by seven A/C segregating columns.
pub fn turtle_like_alignment() -> Alignment {
    let mut row = Vec::with_capacity(10_007);
    for (code, count) in [(0u8, 3913), (1, 2727), (2, 2372), (3, 988)] {
        row.extend(std::iter::repeat_n(code, count));
    }
    let mut other = row.clone();
    row.extend([0u8; 7]);
    other.extend([1u8; 7]);
    Alignment::from_codes(vec!["s1".into(), "s2".into()], vec![row, other], 4)
        .expect("fixture is valid")
}
