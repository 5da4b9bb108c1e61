// Hand-enumerated equivalence oracle: (candidate, gold, expected).
//
// This table was written down before the normalizer and defines the
// supported grammar. Every entry was derived by hand from the documented
// rules: exact rational/decimal equality, LaTeX wrapper stripping, ordered
// tuples vs unordered set braces, cosmetic percent/degree suffixes,
// case-folded trailing units, and whitespace-insensitive string fallback.
pub const NORMALIZE_ORACLE: &[(&str, &str, bool)] = &[
    // rationals and decimals, exact arithmetic
    ("0.5", "1/2", true),
    ("1/2", "0.5", true),
    ("0.25", "1/4", true),
    ("2/4", "1/2", true),
    ("0.333", "1/3", false),
    ("3", "3.0", true),
    ("3", "3.00", true),
    ("007", "7", true),
    ("-1/2", "-0.5", true),
    ("-1/2", "0.5", false),
    ("1/3", "2/6", true),
    ("6/4", "3/2", true),
    ("0", "0.0", true),
    ("42", "42", true),
    ("41", "42", false),
    (".5", "1/2", true),
    ("+3", "3", true),
    ("1.5e2", "150", true),
    ("2.5e-1", "1/4", true),
    ("10", "1e1", true),
    ("0.1", "1/10", true),
    ("22/7", "3.142857", false),
    // LaTeX wrappers
    ("\\frac{1}{2}", "0.5", true),
    ("\\frac{1}{2}", "1/2", true),
    ("\\dfrac{3}{4}", "0.75", true),
    ("\\tfrac{1}{5}", "0.2", true),
    ("$\\frac{1}{2}$", "1/2", true),
    ("$42$", "42", true),
    ("\\left(3,1\\right)", "(3,1)", true),
    ("\\text{even}", "even", true),
    ("\\mathrm{cm}", "cm", true),
    ("\\boxed{7}", "7", true),
    ("\\frac{1}{2}", "\\frac{2}{4}", true),
    ("22/7", "\\frac{22}{7}", true),
    ("1 + \\sqrt{2}", "1+\\sqrt{2}", true),
    ("\\sqrt{2}", "\\sqrt{3}", false),
    // ordered tuples vs set braces
    ("(3,1)", "(1,3)", false),
    ("(1,3)", "(1,3)", true),
    ("(1, 3)", "(1,3)", true),
    ("{3,1}", "{1,3}", true),
    ("{1,2,3}", "{3,2,1}", true),
    ("{1,2}", "{1,2,3}", false),
    ("(0.5, 2)", "(1/2, 2)", true),
    ("\\{1,2\\}", "{2,1}", true),
    ("(1,2,3)", "(1,2)", false),
    ("{1/2}", "{0.5}", true),
    ("(1,(2,3))", "(1,(2,3))", true),
    ("(-1, 1)", "(-1,1)", true),
    ("{0.5, 0.25}", "{1/4, 1/2}", true),
    ("(3,1)", "{3,1}", false),
    // percent and degree suffixes are cosmetic
    ("50%", "50", true),
    ("50\\%", "50", true),
    ("50%", "1/2", false),
    ("90^\\circ", "90", true),
    ("90^{\\circ}", "90", true),
    ("45\u{00b0}", "45", true),
    ("12.5%", "25/2", true),
    ("100\\%", "100", true),
    // trailing units are case-folded
    ("5 cm", "5 CM", true),
    ("5cm", "5 cm", true),
    ("3 KG", "3 kg", true),
    ("5 cm", "5 mm", false),
    ("5 cm", "5", false),
    // plain strings: whitespace-insensitive, otherwise exact
    ("x", "x", true),
    ("x", "y", false),
    ("even", "Even", false),
    ("a b", "ab", true),
    ("x+y", "y+x", false),
    ("1,000", "1000", false),
];
