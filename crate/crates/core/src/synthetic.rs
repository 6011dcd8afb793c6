//! Seeded template generator for C-like corpora.
//!
//! Each vulnerable function comes with a fixed counterpart that differs by a
//! small patch (an added guard, a safer call, a cleared pointer). Clean
//! functions are never derived from a pair: half are careful code from the
//! same domain, half are generic utilities. Identifiers, constants and
//! filler statements are drawn from fixed pools so that the output is a
//! pure function of the seed.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{FunctionRecord, Label};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticConfig {
    pub pairs: usize,
    pub clean: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            pairs: 500,
            clean: 500,
            seed: 0,
        }
    }
}

const NOUNS: &[&str] = &[
    "packet", "header", "frame", "record", "entry", "token", "chunk", "block", "field", "node", "msg", "cfg", "name",
    "path", "key", "value", "item", "slot", "page", "segment",
];
const VERBS: &[&str] = &[
    "parse", "read", "load", "copy", "decode", "handle", "process", "fill", "store", "extract", "unpack", "fetch",
];
const PREFIXES: &[&str] = &["net", "io", "util", "proto", "img", "xml", "usb", "fs", "http", "dev"];
const SIZES: &[u32] = &[8, 16, 32, 64, 128, 256, 512, 1024];

struct Names {
    func: String,
    buf: String,
    src: String,
    len: String,
    idx: String,
    ptr: String,
    size: u32,
}

fn names(rng: &mut ChaCha8Rng) -> Names {
    let pick = |rng: &mut ChaCha8Rng, pool: &[&str]| pool.choose(rng).unwrap().to_string();
    let noun = pick(rng, NOUNS);
    Names {
        func: format!("{}_{}_{}", pick(rng, PREFIXES), pick(rng, VERBS), noun),
        buf: format!("{noun}_buf"),
        src: pick(rng, &["src", "input", "data", "in", "raw"]),
        len: pick(rng, &["len", "n", "count", "size", "nbytes"]),
        idx: pick(rng, &["i", "idx", "pos", "off", "k"]),
        ptr: pick(rng, &["p", "ptr", "obj", "ctx", "state"]),
        size: *SIZES.choose(rng).unwrap(),
    }
}

/// Neutral statements shared by every template family.
fn filler(rng: &mut ChaCha8Rng, n: &Names) -> Vec<String> {
    let count = rng.gen_range(0..4);
    (0..count)
        .map(|_| match rng.gen_range(0..6) {
            0 => format!("    int status_{} = 0;", rng.gen_range(0..10)),
            1 => "    log_debug(\"enter\");".to_string(),
            2 => format!("    unsigned flags = {:#x};", rng.gen_range(1..256)),
            3 => format!("    stats.calls += {};", rng.gen_range(1..4)),
            4 => format!("    trace_{}(__LINE__);", n.func.split('_').next().unwrap()),
            _ => "    errno = 0;".to_string(),
        })
        .collect()
}

fn body(sig: String, lines: Vec<String>) -> String {
    let mut out = sig;
    out.push_str(" {\n");
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    out.push_str("}\n");
    out
}

/// `(vulnerable, fixed, cwe)` for one randomly chosen family.
fn vulnerable_pair(rng: &mut ChaCha8Rng) -> (String, String, &'static str) {
    let n = names(rng);
    let pre = filler(rng, &n);
    let post = filler(rng, &n);
    let family = rng.gen_range(0..8);
    let (sig, vul, fix, cwe): (String, Vec<String>, Vec<String>, &str) = match family {
        0 => (
            format!("int {}(const char *{})", n.func, n.src),
            vec![format!("    char {}[{}];", n.buf, n.size), format!("    strcpy({}, {});", n.buf, n.src)],
            vec![
                format!("    char {}[{}];", n.buf, n.size),
                format!("    if (strlen({}) >= sizeof({})) return -1;", n.src, n.buf),
                format!("    strcpy({}, {});", n.buf, n.src),
            ],
            "CWE-787",
        ),
        1 => (
            format!("int {}(const int *table, int {})", n.func, n.idx),
            vec![format!("    return table[{}];", n.idx)],
            vec![
                format!("    if ({} < 0 || {} >= {}) return -1;", n.idx, n.idx, n.size),
                format!("    return table[{}];", n.idx),
            ],
            "CWE-125",
        ),
        2 => (
            format!("void {}(struct {} *{})", n.func, n.buf, n.ptr),
            vec![format!("    free({}->data);", n.ptr), format!("    {}->data[0] = 0;", n.ptr)],
            vec![
                format!("    free({}->data);", n.ptr),
                format!("    {}->data = NULL;", n.ptr),
                format!("    if ({}->data) {}->data[0] = 0;", n.ptr, n.ptr),
            ],
            "CWE-416",
        ),
        3 => (
            format!("char *{}(size_t {})", n.func, n.len),
            vec![
                format!("    char *{} = malloc({} * {});", n.buf, n.len, n.size),
                format!("    memset({}, 0, {} * {});", n.buf, n.len, n.size),
                format!("    return {};", n.buf),
            ],
            vec![
                format!("    if ({} > SIZE_MAX / {}) return NULL;", n.len, n.size),
                format!("    char *{} = malloc({} * {});", n.buf, n.len, n.size),
                format!("    if (!{}) return NULL;", n.buf),
                format!("    memset({}, 0, {} * {});", n.buf, n.len, n.size),
                format!("    return {};", n.buf),
            ],
            "CWE-190",
        ),
        4 => (
            format!("int {}(char *{}, const char *{})", n.func, n.buf, n.src),
            vec![format!("    sprintf({}, \"%s/%s\", prefix, {});", n.buf, n.src)],
            vec![format!("    snprintf({}, {}, \"%s/%s\", prefix, {});", n.buf, n.size, n.src)],
            "CWE-120",
        ),
        5 => (
            format!("int {}(const char *{}, size_t {})", n.func, n.src, n.len),
            vec![format!("    char {}[{}];", n.buf, n.size), format!("    memcpy({}, {}, {});", n.buf, n.src, n.len)],
            vec![
                format!("    char {}[{}];", n.buf, n.size),
                format!("    if ({} > sizeof({})) {} = sizeof({});", n.len, n.buf, n.len, n.buf),
                format!("    memcpy({}, {}, {});", n.buf, n.src, n.len),
            ],
            "CWE-119",
        ),
        6 => (
            format!("void {}(const char *{})", n.func, n.src),
            vec![format!("    printf({});", n.src)],
            vec![format!("    printf(\"%s\", {});", n.src)],
            "CWE-134",
        ),
        _ => (
            format!("int {}(struct {} *{})", n.func, n.buf, n.ptr),
            vec![format!("    return {}->next->{};", n.ptr, n.len)],
            vec![
                format!("    if (!{} || !{}->next) return 0;", n.ptr, n.ptr),
                format!("    return {}->next->{};", n.ptr, n.len),
            ],
            "CWE-476",
        ),
    };
    let assemble = |core: Vec<String>| {
        let mut lines = pre.clone();
        lines.extend(core);
        lines.extend(post.iter().cloned());
        body(sig.clone(), lines)
    };
    (assemble(vul), assemble(fix), cwe)
}

/// Careful code from the same domain as the vulnerable families.
fn safe_domain_function(rng: &mut ChaCha8Rng) -> String {
    let n = names(rng);
    let mut lines = filler(rng, &n);
    let (sig, core): (String, Vec<String>) = match rng.gen_range(0..5) {
        0 => (
            format!("int {}(const char *{})", n.func, n.src),
            vec![
                format!("    char {}[{}];", n.buf, n.size),
                format!("    strncpy({}, {}, sizeof({}) - 1);", n.buf, n.src, n.buf),
                format!("    {}[sizeof({}) - 1] = '\\0';", n.buf, n.buf),
                "    return 0;".into(),
            ],
        ),
        1 => (
            format!("int {}(const int *table, size_t {})", n.func, n.len),
            vec![
                "    int best = 0;".into(),
                format!("    for (size_t {i} = 0; {i} < {l} && {i} < {s}; {i}++)", i = n.idx, l = n.len, s = n.size),
                format!("        if (table[{}] > best) best = table[{}];", n.idx, n.idx),
                "    return best;".into(),
            ],
        ),
        2 => (
            format!("char *{}(size_t {})", n.func, n.len),
            vec![
                format!("    char *{} = calloc({}, {});", n.buf, n.len, n.size),
                format!("    if ({} == NULL) return NULL;", n.buf),
                format!("    return {};", n.buf),
            ],
        ),
        3 => (
            format!("int {}(char *{}, size_t cap, const char *{})", n.func, n.buf, n.src),
            vec![
                format!("    int w = snprintf({}, cap, \"%s\", {});", n.buf, n.src),
                "    return (w < 0 || (size_t)w >= cap) ? -1 : w;".into(),
            ],
        ),
        _ => (
            format!("void {}(struct {} *{})", n.func, n.buf, n.ptr),
            vec![
                format!("    if ({} == NULL) return;", n.ptr),
                format!("    release({}->data);", n.ptr),
                format!("    {}->data = NULL;", n.ptr),
            ],
        ),
    };
    lines.extend(core);
    lines.extend(filler(rng, &n));
    body(sig, lines)
}

fn clean_function(rng: &mut ChaCha8Rng) -> String {
    if rng.gen_bool(0.5) {
        return safe_domain_function(rng);
    }
    let noun = *NOUNS.choose(rng).unwrap();
    let k = rng.gen_range(2..10);
    match rng.gen_range(0..6) {
        0 => body(
            format!("double mean_{noun}(const double *xs, int count)"),
            vec![
                "    double acc = 0.0;".into(),
                "    for (int j = 0; j < count; j++) acc += xs[j];".into(),
                "    return count > 0 ? acc / count : 0.0;".into(),
            ],
        ),
        1 => body(
            format!("unsigned hash_{noun}(unsigned seed, unsigned x)"),
            vec![
                format!("    seed ^= x + 0x9e3779b9 + (seed << {k});"),
                format!("    return seed * {}u;", rng.gen_range(3..200) * 2 + 1),
            ],
        ),
        2 => body(
            format!("int max_{noun}(int a, int b)"),
            vec![format!("    int bias = {k};"), "    return (a > b ? a : b) + bias;".into()],
        ),
        3 => body(
            format!("int count_{noun}(const struct list *head)"),
            vec![
                "    int total = 0;".into(),
                "    while (head) { total++; head = head->next; }".into(),
                "    return total;".into(),
            ],
        ),
        4 => body(
            format!("void swap_{noun}(int *a, int *b)"),
            vec!["    int t = *a;".into(), "    *a = *b;".into(), "    *b = t;".into()],
        ),
        _ => body(
            format!("long clamp_{noun}(long v, long lo, long hi)"),
            vec![
                "    if (v < lo) return lo;".into(),
                "    if (v > hi) return hi;".into(),
                format!("    return v * {k} / {k};"),
            ],
        ),
    }
}

/// Generates `pairs` vulnerable records (each with `fixed_code`) followed by
/// `clean` non-vulnerable records. Ids are `vul-N` and `clean-N`; clean
/// records are made textually unique by a numbered tag comment.
pub fn generate(config: SyntheticConfig) -> Vec<FunctionRecord> {
    let mut rng = seed::rng(seed::derive(config.seed, &[0x5EED]));
    let mut out = Vec::with_capacity(config.pairs + config.clean);
    for i in 0..config.pairs {
        let (vul, fix, cwe) = vulnerable_pair(&mut rng);
        out.push(FunctionRecord {
            id: format!("vul-{i}"),
            project: PREFIXES[i % PREFIXES.len()].to_string(),
            code: format!("// fn {i}\n{vul}"),
            label: Label::Vulnerable,
            fixed_code: Some(format!("// fn {i}\n{fix}")),
            cve_id: None,
            cwe_id: Some(cwe.to_string()),
        });
    }
    for i in 0..config.clean {
        out.push(FunctionRecord {
            id: format!("clean-{i}"),
            project: "misc".to_string(),
            code: format!("// fn {i}\n{}", clean_function(&mut rng)),
            label: Label::NonVulnerable,
            fixed_code: None,
            cve_id: None,
            cwe_id: None,
        });
    }
    out
}

/// Ten-function toy set: five functions built only from the tokens of
/// pattern A (vulnerable), five only from pattern B.
pub fn separable_toy() -> Vec<FunctionRecord> {
    let a = ["strcpy", "gets", "sprintf", "strcat", "memcpy"];
    let b = ["fabs", "sqrt", "floor", "ceil", "round"];
    let mut out = Vec::new();
    for i in 0..5 {
        out.push(FunctionRecord {
            id: format!("a{i}"),
            project: "toy".into(),
            code: format!("{} {} {}", a[i], a[(i + 1) % 5], a[(i + 2) % 5]),
            label: Label::Vulnerable,
            fixed_code: None,
            cve_id: None,
            cwe_id: None,
        });
        out.push(FunctionRecord {
            id: format!("b{i}"),
            project: "toy".into(),
            code: format!("{} {} {}", b[i], b[(i + 1) % 5], b[(i + 2) % 5]),
            label: Label::NonVulnerable,
            fixed_code: None,
            cve_id: None,
            cwe_id: None,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::edit_profile;
    use std::collections::HashSet;

    #[test]
    fn deterministic_and_seed_sensitive() {
        let cfg = SyntheticConfig {
            pairs: 20,
            clean: 20,
            seed: 3,
        };
        assert_eq!(generate(cfg), generate(cfg));
        assert_ne!(generate(cfg), generate(SyntheticConfig { seed: 4, ..cfg }));
    }

    #[test]
    fn shape_and_validity() {
        let recs = generate(SyntheticConfig {
            pairs: 50,
            clean: 30,
            seed: 0,
        });
        assert_eq!(recs.len(), 80);
        assert_eq!(recs.iter().filter(|r| r.label == Label::Vulnerable).count(), 50);
        let ids: HashSet<_> = recs.iter().map(|r| &r.id).collect();
        assert_eq!(ids.len(), 80);
        let codes: HashSet<_> = recs.iter().map(|r| &r.code).collect();
        assert_eq!(codes.len(), 80);
        for r in &recs {
            r.validate().unwrap();
        }
    }

    #[test]
    fn fixes_are_small_patches() {
        for r in generate(SyntheticConfig {
            pairs: 100,
            clean: 0,
            seed: 1,
        }) {
            let fix = r.fixed_code.as_deref().unwrap();
            assert_ne!(fix, r.code);
            let p = edit_profile(&r.code, fix).unwrap();
            assert!((1..=5).contains(&p.changed_lines), "{}: {p:?}", r.id);
        }
    }

    #[test]
    fn toy_patterns_share_no_tokens() {
        let toy = separable_toy();
        let words = |l: Label| -> HashSet<String> {
            toy.iter()
                .filter(|r| r.label == l)
                .flat_map(|r| r.code.split_whitespace().map(str::to_string).collect::<Vec<_>>())
                .collect()
        };
        assert!(words(Label::Vulnerable).is_disjoint(&words(Label::NonVulnerable)));
    }
}
