//! Request sequences and the dataset adapters that produce them.
//!
//! Time and position coincide: the `i`-th request (1-based) happens at time
//! `i`. For every request the trace stores the index of the next request to
//! the same page, with `n + 1` standing in for "never again".

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Opaque page identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PageId(pub u64);

impl fmt::Display for PageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for PageId {
    fn from(v: u64) -> Self {
        PageId(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Request {
    /// 1-based position, which is also the request time.
    pub index: usize,
    pub page: PageId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    requests: Vec<Request>,
    universe_size: usize,
    next_occurrence: Vec<usize>,
}

impl Trace {
    pub fn from_pages<I>(pages: I) -> Self
    where
        I: IntoIterator,
        I::Item: Into<PageId>,
    {
        let requests: Vec<Request> = pages
            .into_iter()
            .enumerate()
            .map(|(i, p)| Request {
                index: i + 1,
                page: p.into(),
            })
            .collect();
        let next_occurrence = compute_next_occurrence(&requests);
        let universe_size = {
            let mut seen = rustc_hash::FxHashSet::default();
            requests.iter().filter(|r| seen.insert(r.page)).count()
        };
        Trace {
            requests,
            universe_size,
            next_occurrence,
        }
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn requests(&self) -> &[Request] {
        &self.requests
    }

    pub fn pages(&self) -> impl ExactSizeIterator<Item = PageId> + '_ {
        self.requests.iter().map(|r| r.page)
    }

    pub fn universe_size(&self) -> usize {
        self.universe_size
    }

    /// Next-occurrence index for every request, in request order.
    pub fn next_occurrence(&self) -> &[usize] {
        &self.next_occurrence
    }

    /// Page requested at time `t` (1-based).
    pub fn page_at(&self, t: usize) -> PageId {
        self.requests[t - 1].page
    }

    /// Next request time of the page requested at time `t` (1-based).
    pub fn next_at(&self, t: usize) -> usize {
        self.next_occurrence[t - 1]
    }

    /// The "never requested again" marker, `n + 1`.
    pub fn sentinel(&self) -> usize {
        self.requests.len() + 1
    }

    /// Content hash over the page sequence; stable across runs and platforms.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for r in &self.requests {
            h.update(r.page.0.to_le_bytes());
        }
        format!("{:x}", h.finalize())
    }
}

/// Next-occurrence indices by a single backward pass.
pub fn compute_next_occurrence(requests: &[Request]) -> Vec<usize> {
    let n = requests.len();
    let mut next = vec![n + 1; n];
    let mut upcoming: HashMap<PageId, usize> = HashMap::with_capacity(n.min(1 << 16));
    for (i, r) in requests.iter().enumerate().rev() {
        if let Some(&later) = upcoming.get(&r.page) {
            next[i] = later;
        }
        upcoming.insert(r.page, i + 1);
    }
    next
}

/// Maps string tokens to page ids.
///
/// In `dense` mode ids are handed out in first-appearance order starting at 0.
/// Otherwise tokens that parse as unsigned integers keep their numeric value
/// and the rest are numbered from `1 << 63` upward.
#[derive(Debug, Default)]
pub struct TokenInterner {
    ids: HashMap<String, PageId>,
    next: u64,
    numeric: bool,
}

const SYMBOLIC_BASE: u64 = 1 << 63;

impl TokenInterner {
    pub fn dense() -> Self {
        TokenInterner::default()
    }

    pub fn numeric_preserving() -> Self {
        TokenInterner {
            numeric: true,
            ..TokenInterner::default()
        }
    }

    pub fn intern(&mut self, token: &str) -> PageId {
        if self.numeric {
            if let Ok(v) = token.parse::<u64>() {
                if v < SYMBOLIC_BASE {
                    return PageId(v);
                }
            }
        }
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = if self.numeric {
            PageId(SYMBOLIC_BASE + self.next)
        } else {
            PageId(self.next)
        };
        self.next += 1;
        self.ids.insert(token.to_owned(), id);
        id
    }
}

/// One token per non-empty line; `#` lines are comments.
pub fn parse_plain_trace(text: &str) -> Result<Trace> {
    let mut interner = TokenInterner::dense();
    let pages: Vec<PageId> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|tok| interner.intern(tok))
        .collect();
    if pages.is_empty() {
        return Err(Error::EmptyTrace);
    }
    Ok(Trace::from_pages(pages))
}

pub const DEFAULT_BRIGHTKITE_CACHE: usize = 10;

/// Converts BrightKite check-ins (`user, time, lat, lon, location`) into one
/// trace per user, keeping users with at least `2 * cache_size` distinct
/// locations. Users come out in first-appearance order; each user's
/// check-ins are ordered by timestamp.
pub fn ingest_brightkite(text: &str, cache_size: usize) -> Result<Vec<(String, Trace)>> {
    let mut order: Vec<String> = Vec::new();
    let mut by_user: HashMap<String, Vec<(String, PageId)>> = HashMap::new();
    let mut locations = TokenInterner::numeric_preserving();

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() < 5 {
            return Err(Error::parse(
                lineno,
                format!("expected 5 tab-separated columns, found {}", cols.len()),
            ));
        }
        let (user, time, loc) = (cols[0], cols[1], cols[4]);
        if user.is_empty() {
            return Err(Error::parse(lineno, "missing user id"));
        }
        if time.is_empty() {
            return Err(Error::parse(lineno, "missing check-in time"));
        }
        if loc.is_empty() {
            return Err(Error::parse(lineno, "missing location id"));
        }
        let page = locations.intern(loc);
        let entry = by_user.entry(user.to_owned()).or_insert_with(|| {
            order.push(user.to_owned());
            Vec::new()
        });
        entry.push((time.to_owned(), page));
    }

    let threshold = 2 * cache_size;
    let mut out = Vec::new();
    for user in order {
        let mut checkins = by_user.remove(&user).unwrap_or_default();
        // ISO-8601 timestamps sort lexicographically; ties keep file order.
        checkins.sort_by(|a, b| a.0.cmp(&b.0));
        let trace = Trace::from_pages(checkins.into_iter().map(|(_, p)| p));
        if trace.universe_size() >= threshold {
            out.push((user, trace));
        }
    }
    Ok(out)
}

pub const DEFAULT_CITI_COLUMN: &str = "start station id";

fn normalize_header(h: &str) -> String {
    h.trim().to_ascii_lowercase().replace(['_', '-'], " ")
}

/// One request per ride: the start station, in file order.
pub fn ingest_citibike(text: &str, station_column: &str) -> Result<Trace> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let wanted = normalize_header(station_column);
    let col = rdr
        .headers()?
        .iter()
        .position(|h| normalize_header(h) == wanted)
        .ok_or_else(|| Error::Config(format!("no column named `{station_column}`")))?;

    let mut stations = TokenInterner::numeric_preserving();
    let mut pages = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(line, format!("malformed row: {e}"))
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let station = rec.get(col).map(str::trim).unwrap_or("");
        if station.is_empty() {
            return Err(Error::parse(line, "missing start station id"));
        }
        pages.push(stations.intern(station));
    }
    if pages.is_empty() {
        return Err(Error::EmptyTrace);
    }
    Ok(Trace::from_pages(pages))
}

/// Geometry of a set-associative cache.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetAssociativeConfig {
    pub capacity_bytes: u64,
    pub line_bytes: u64,
    pub ways: u64,
}

impl Default for SetAssociativeConfig {
    /// 2 MiB, 64-byte lines, 16 ways.
    fn default() -> Self {
        SetAssociativeConfig {
            capacity_bytes: 2 << 20,
            line_bytes: 64,
            ways: 16,
        }
    }
}

impl SetAssociativeConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.capacity_bytes.is_power_of_two() || !self.line_bytes.is_power_of_two() {
            return Err(Error::InvalidParameter(
                "capacity and line size must be powers of two".into(),
            ));
        }
        let lines = self.capacity_bytes / self.line_bytes;
        if self.ways == 0 || lines == 0 || !lines.is_multiple_of(self.ways) {
            return Err(Error::InvalidParameter(format!(
                "{} ways do not divide {lines} lines",
                self.ways
            )));
        }
        Ok(())
    }

    pub fn num_sets(&self) -> u64 {
        self.capacity_bytes / self.line_bytes / self.ways
    }

    pub fn line_of(&self, addr: u64) -> u64 {
        addr / self.line_bytes
    }

    pub fn set_of(&self, addr: u64) -> u64 {
        self.line_of(addr) % self.num_sets()
    }
}

fn parse_address(tok: &str) -> Option<u64> {
    match tok.strip_prefix("0x").or_else(|| tok.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => tok.parse().ok(),
    }
}

/// Splits a memory-address trace into per-set traces of line addresses.
pub fn ingest_address_trace(
    text: &str,
    config: &SetAssociativeConfig,
) -> Result<BTreeMap<u64, Trace>> {
    config.validate()?;
    let mut sets: BTreeMap<u64, Vec<PageId>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let tok = line.trim();
        if tok.is_empty() || tok.starts_with('#') {
            continue;
        }
        let addr = parse_address(tok)
            .ok_or_else(|| Error::parse(lineno + 1, format!("bad address `{tok}`")))?;
        sets.entry(config.set_of(addr))
            .or_default()
            .push(PageId(config.line_of(addr)));
    }
    if sets.is_empty() {
        return Err(Error::EmptyTrace);
    }
    Ok(sets
        .into_iter()
        .map(|(set, pages)| (set, Trace::from_pages(pages)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_next(pages: &[PageId]) -> Vec<usize> {
        let n = pages.len();
        (0..n)
            .map(|i| {
                (i + 1..n)
                    .find(|&j| pages[j] == pages[i])
                    .map_or(n + 1, |j| j + 1)
            })
            .collect()
    }

    fn ids(v: &[u64]) -> Vec<PageId> {
        v.iter().copied().map(PageId).collect()
    }

    #[test]
    fn plain_examples() {
        let t = parse_plain_trace("a\nb\na").unwrap();
        assert_eq!(t.next_occurrence(), &[3, 4, 4]);
        assert_eq!(t.pages().collect::<Vec<_>>(), ids(&[0, 1, 0]));

        let t = parse_plain_trace("a\na").unwrap();
        assert_eq!(t.next_occurrence(), &[2, 3]);

        let t = parse_plain_trace("a\nb\nc\nb\na\n").unwrap();
        assert_eq!(t.universe_size(), 3);
        assert_eq!(t.next_occurrence(), &[5, 4, 6, 6, 6]);
        assert_eq!(t.next_occurrence(), brute_next(&t.pages().collect::<Vec<_>>()));
    }

    #[test]
    fn plain_skips_comments_and_blanks() {
        let t = parse_plain_trace("# header\n\nx\n  \ny\n#x\nx\n").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.next_occurrence(), &[3, 4, 4]);
    }

    #[test]
    fn plain_empty_is_error() {
        assert!(matches!(parse_plain_trace(""), Err(Error::EmptyTrace)));
        assert!(matches!(parse_plain_trace("# only\n\n"), Err(Error::EmptyTrace)));
    }

    #[test]
    fn next_occurrence_small() {
        assert!(compute_next_occurrence(&[]).is_empty());
        let one = Trace::from_pages([7u64]);
        assert_eq!(one.next_occurrence(), &[2]);
        let t = Trace::from_pages([1u64, 2, 3, 2, 1]);
        assert_eq!(t.next_occurrence(), &[5, 4, 6, 6, 6]);
    }

    #[test]
    fn brightkite_filters_small_users() {
        let text = "1\t2010-01-01T00:00:00Z\t0\t0\tl1\n\
                    1\t2010-01-02T00:00:00Z\t0\t0\tl2\n\
                    1\t2010-01-03T00:00:00Z\t0\t0\tl3\n\
                    2\t2010-01-01T00:00:00Z\t0\t0\tl1\n\
                    2\t2010-01-02T00:00:00Z\t0\t0\tl4\n\
                    2\t2010-01-03T00:00:00Z\t0\t0\tl5\n";
        assert!(ingest_brightkite(text, 10).unwrap().is_empty());

        let mut text = String::new();
        for i in 0..25 {
            text.push_str(&format!("9\t2010-01-{:02}T00:00:00Z\t1.0\t2.0\tloc{i}\n", i + 1));
        }
        let users = ingest_brightkite(&text, 10).unwrap();
        assert_eq!(users.len(), 1);
        assert_eq!(users[0].0, "9");
        assert_eq!(users[0].1.universe_size(), 25);
    }

    #[test]
    fn brightkite_sorts_chronologically() {
        let text = "u\t2010-01-03T00:00:00Z\t0\t0\t30\n\
                    u\t2010-01-01T00:00:00Z\t0\t0\t10\n\
                    u\t2010-01-02T00:00:00Z\t0\t0\t20\n";
        let users = ingest_brightkite(text, 1).unwrap();
        assert_eq!(users[0].1.pages().collect::<Vec<_>>(), ids(&[10, 20, 30]));
    }

    #[test]
    fn brightkite_errors_carry_line_numbers() {
        let text = "u\t2010-01-01T00:00:00Z\t0\t0\t1\nu\t2010-01-02T00:00:00Z\t0\t0\t\n";
        match ingest_brightkite(text, 1) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match ingest_brightkite("u\tonly-two\n", 1) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn citibike_start_stations() {
        let text = "tripduration,start station id,end station id\n10,7,3\n11,7,4\n12,9,7\n";
        let t = ingest_citibike(text, DEFAULT_CITI_COLUMN).unwrap();
        assert_eq!(t.pages().collect::<Vec<_>>(), ids(&[7, 7, 9]));

        let snake = "ride_id,start_station_id\nx,7\ny,9\n";
        let t = ingest_citibike(snake, DEFAULT_CITI_COLUMN).unwrap();
        assert_eq!(t.pages().collect::<Vec<_>>(), ids(&[7, 9]));
    }

    #[test]
    fn citibike_errors() {
        assert!(ingest_citibike("", DEFAULT_CITI_COLUMN).is_err());
        assert!(matches!(
            ingest_citibike("start station id\n", DEFAULT_CITI_COLUMN),
            Err(Error::EmptyTrace)
        ));
        let bad = "a,start station id\n1,2\n1,2,3\n";
        match ingest_citibike(bad, DEFAULT_CITI_COLUMN) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            ingest_citibike("a,b\n1,2\n", DEFAULT_CITI_COLUMN),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn set_geometry() {
        let cfg = SetAssociativeConfig::default();
        assert_eq!(cfg.num_sets(), 2048);
        assert_eq!(cfg.line_of(0), 0);
        assert_eq!(cfg.line_of(64), 1);
        assert_eq!(cfg.set_of(0), cfg.set_of(131072));
        assert_ne!(cfg.line_of(0), cfg.line_of(131072));
        let bad = SetAssociativeConfig {
            capacity_bytes: 3000,
            line_bytes: 64,
            ways: 4,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn address_trace_split() {
        let sets =
            ingest_address_trace("0\n64\n0x20000\n# c\n131072\n", &SetAssociativeConfig::default())
                .unwrap();
        assert_eq!(sets.len(), 2);
        let s0 = &sets[&0];
        assert_eq!(s0.pages().collect::<Vec<_>>(), ids(&[0, 2048, 2048]));
        assert_eq!(sets[&1].pages().collect::<Vec<_>>(), ids(&[1]));
        let total: usize = sets.values().map(Trace::len).sum();
        assert_eq!(total, 4);

        match ingest_address_trace("12\nzz\n", &SetAssociativeConfig::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fingerprint_is_content_based() {
        let a = Trace::from_pages([1u64, 2, 3]);
        let b = Trace::from_pages([1u64, 2, 3]);
        let c = Trace::from_pages([1u64, 3, 2]);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]
            #[test]
            fn next_occurrence_matches_forward_scan(
                pages in prop::collection::vec(0u64..20, 0..200)
            ) {
                let t = Trace::from_pages(pages.iter().copied());
                let p = ids(&pages);
                let expect = brute_next(&p);
                prop_assert_eq!(t.next_occurrence(), expect.as_slice());
                for (i, &nx) in t.next_occurrence().iter().enumerate() {
                    prop_assert!(nx > i + 1);
                    if nx <= t.len() {
                        prop_assert_eq!(t.page_at(nx), t.page_at(i + 1));
                        for j in i + 2..nx {
                            prop_assert_ne!(t.page_at(j), t.page_at(i + 1));
                        }
                    }
                }
            }

            #[test]
            fn address_split_preserves_count(
                addrs in prop::collection::vec(0u64..(1 << 24), 1..300)
            ) {
                let text: String = addrs.iter().map(|a| format!("{a}\n")).collect();
                let cfg = SetAssociativeConfig::default();
                let sets = ingest_address_trace(&text, &cfg).unwrap();
                let total: usize = sets.values().map(Trace::len).sum();
                prop_assert_eq!(total, addrs.len());
                let again = ingest_address_trace(&text, &cfg).unwrap();
                prop_assert_eq!(sets, again);
            }
        }
    }
}
