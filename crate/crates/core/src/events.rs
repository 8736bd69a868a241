//! Event data: the neutral JSONL interchange format, a one-way adapter for
//! the StatsBomb open-data layout, and possession-chain assembly.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PitchPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Pass,
    Dribble,
    Error,
    Clearance,
    Shot,
}

impl ActionKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "pass" => ActionKind::Pass,
            "dribble" => ActionKind::Dribble,
            "error" => ActionKind::Error,
            "clearance" => ActionKind::Clearance,
            "shot" => ActionKind::Shot,
            _ => return None,
        })
    }

    pub fn is_move(self) -> bool {
        self != ActionKind::Shot
    }
}

/// One on-the-ball action in the normalized pitch frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub match_id: String,
    pub possession_id: String,
    pub team_id: String,
    pub player_id: String,
    /// Minutes since kickoff.
    pub minute_offset: f64,
    pub action_kind: ActionKind,
    pub start: PitchPoint,
    /// Equal to `start` for shots.
    pub end: PitchPoint,
    /// Moves: possession retained. Shots: scored.
    pub success: bool,
    pub is_goal: bool,
}

impl EventRecord {
    fn same_possession(&self, other: &EventRecord) -> bool {
        self.match_id == other.match_id
            && self.possession_id == other.possession_id
            && self.team_id == other.team_id
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NeutralLine {
    match_id: String,
    possession_id: String,
    team_id: String,
    player_id: String,
    minute_offset: f64,
    action_kind: String,
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    success: bool,
    is_goal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    NeutralJsonl,
    StatsbombJson,
}

impl std::str::FromStr for EventFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neutral" | "neutral_jsonl" | "jsonl" => Ok(EventFormat::NeutralJsonl),
            "statsbomb" | "statsbomb_json" => Ok(EventFormat::StatsbombJson),
            _ => Err(Error::domain(format!("unknown event format {s:?}"))),
        }
    }
}

/// Parsed events plus the number of records dropped for an action kind
/// outside the five modelled ones.
#[derive(Debug, Clone, Default)]
pub struct ParsedEvents {
    pub events: Vec<EventRecord>,
    pub skipped: usize,
}

/// Parses an event stream. `source` names the stream; the StatsBomb
/// layout carries no match id of its own, so it is used as one there.
pub fn parse_events<R: Read>(reader: R, format: EventFormat, source: &str) -> Result<ParsedEvents> {
    let mut parsed = match format {
        EventFormat::NeutralJsonl => parse_neutral(std::io::BufReader::new(reader))?,
        EventFormat::StatsbombJson => parse_statsbomb(reader, source)?,
    };
    sort_events(&mut parsed.events);
    if parsed.skipped > 0 {
        log::warn!("{source}: skipped {} events with unmodelled action kinds", parsed.skipped);
    }
    Ok(parsed)
}

/// Stable sort by `(match_id, minute_offset)`.
pub fn sort_events(events: &mut [EventRecord]) {
    events.sort_by(|a, b| {
        a.match_id
            .cmp(&b.match_id)
            .then(a.minute_offset.total_cmp(&b.minute_offset))
    });
}

fn parse_neutral<R: BufRead>(reader: R) -> Result<ParsedEvents> {
    let mut out = ParsedEvents::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: NeutralLine = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?;
        let Some(kind) = ActionKind::parse(&raw.action_kind) else {
            out.skipped += 1;
            continue;
        };
        if raw.is_goal && kind != ActionKind::Shot {
            return Err(Error::Parse { line: line_no, msg: format!("is_goal set on a {} event", raw.action_kind) });
        }
        if !raw.minute_offset.is_finite() || raw.minute_offset < 0.0 {
            return Err(Error::Parse { line: line_no, msg: format!("bad minute_offset {}", raw.minute_offset) });
        }
        let start = PitchPoint::clamped(raw.x0, raw.y0);
        out.events.push(EventRecord {
            match_id: raw.match_id,
            possession_id: raw.possession_id,
            team_id: raw.team_id,
            player_id: raw.player_id,
            minute_offset: raw.minute_offset,
            action_kind: kind,
            start,
            end: if kind == ActionKind::Shot { start } else { PitchPoint::clamped(raw.x1, raw.y1) },
            success: if kind == ActionKind::Shot { raw.is_goal } else { raw.success },
            is_goal: raw.is_goal,
        });
    }
    Ok(out)
}

/// Writes events as neutral JSONL, one object per line.
pub fn write_neutral<W: Write>(mut w: W, events: &[EventRecord]) -> Result<()> {
    for e in events {
        let line = NeutralLine {
            match_id: e.match_id.clone(),
            possession_id: e.possession_id.clone(),
            team_id: e.team_id.clone(),
            player_id: e.player_id.clone(),
            minute_offset: e.minute_offset,
            action_kind: serde_json::to_value(e.action_kind)?.as_str().unwrap_or_default().to_owned(),
            x0: e.start.x,
            y0: e.start.y,
            x1: e.end.x,
            y1: e.end.y,
            success: e.success,
            is_goal: e.is_goal,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

// StatsBomb open-data layout: a JSON array of events on a 120x80 pitch,
// oriented so the acting team attacks towards x = 120.

#[derive(Deserialize)]
struct SbNamed {
    #[serde(default)]
    id: Option<serde_json::Value>,
    #[serde(default)]
    name: Option<String>,
}

#[derive(Deserialize, Default)]
struct SbDetail {
    #[serde(default)]
    end_location: Option<Vec<f64>>,
    #[serde(default)]
    outcome: Option<SbNamed>,
}

#[derive(Deserialize)]
struct SbEvent {
    #[serde(rename = "type")]
    kind: SbNamed,
    #[serde(default)]
    minute: f64,
    #[serde(default)]
    second: f64,
    #[serde(default)]
    possession: Option<i64>,
    #[serde(default)]
    team: Option<SbNamed>,
    #[serde(default)]
    player: Option<SbNamed>,
    #[serde(default)]
    location: Option<Vec<f64>>,
    #[serde(default)]
    pass: Option<SbDetail>,
    #[serde(default)]
    carry: Option<SbDetail>,
    #[serde(default)]
    shot: Option<SbDetail>,
}

fn sb_id(n: &Option<SbNamed>) -> String {
    match n {
        Some(SbNamed { id: Some(serde_json::Value::String(s)), .. }) => s.clone(),
        Some(SbNamed { id: Some(v), .. }) => v.to_string(),
        Some(SbNamed { name: Some(s), .. }) => s.clone(),
        _ => String::new(),
    }
}

fn sb_point(loc: &[f64]) -> PitchPoint {
    PitchPoint::clamped(loc.first().copied().unwrap_or(0.0) / 120.0, loc.get(1).copied().unwrap_or(0.0) / 80.0)
}

fn parse_statsbomb<R: Read>(reader: R, match_id: &str) -> Result<ParsedEvents> {
    let raw: Vec<serde_json::Value> =
        serde_json::from_reader(reader).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })?;
    let mut decoded = Vec::with_capacity(raw.len());
    for (i, v) in raw.into_iter().enumerate() {
        let ev: SbEvent = serde_json::from_value(v).map_err(|e| Error::Parse { line: i + 1, msg: format!("event #{}: {e}", i + 1) })?;
        decoded.push(ev);
    }
    let mut out = ParsedEvents::default();
    for (i, ev) in decoded.iter().enumerate() {
        let name = ev.kind.name.as_deref().unwrap_or("");
        let kind = match name {
            "Pass" => ActionKind::Pass,
            "Carry" => ActionKind::Dribble,
            "Shot" => ActionKind::Shot,
            "Clearance" => ActionKind::Clearance,
            "Error" => ActionKind::Error,
            _ => {
                out.skipped += 1;
                continue;
            }
        };
        let Some(loc) = ev.location.as_deref() else {
            return Err(Error::Parse { line: i + 1, msg: format!("{name} event without location") });
        };
        let start = sb_point(loc);
        let next_same_possession = decoded.get(i + 1).is_some_and(|n| n.possession == ev.possession);
        let outcome = |d: &Option<SbDetail>| d.as_ref().and_then(|d| d.outcome.as_ref()).and_then(|o| o.name.clone());
        let end_of = |d: &Option<SbDetail>| d.as_ref().and_then(|d| d.end_location.as_deref()).map(sb_point).unwrap_or(start);
        let (end, success, is_goal) = match kind {
            // a completed pass carries no outcome object
            ActionKind::Pass => (end_of(&ev.pass), outcome(&ev.pass).is_none(), false),
            ActionKind::Dribble => (end_of(&ev.carry), true, false),
            ActionKind::Shot => {
                let goal = outcome(&ev.shot).as_deref() == Some("Goal");
                (start, goal, goal)
            }
            ActionKind::Clearance => (start, next_same_possession, false),
            ActionKind::Error => (start, false, false),
        };
        out.events.push(EventRecord {
            match_id: match_id.to_owned(),
            possession_id: ev.possession.map(|p| p.to_string()).unwrap_or_default(),
            team_id: sb_id(&ev.team),
            player_id: sb_id(&ev.player),
            minute_offset: ev.minute + ev.second / 60.0,
            action_kind: kind,
            start,
            end,
            success,
            is_goal,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainTerminal {
    Goal,
    ShotMissed,
    Turnover,
    Truncated,
}

/// Consecutive events of one team within one possession.
#[derive(Debug, Clone, PartialEq)]
pub struct PossessionChain {
    pub events: Vec<EventRecord>,
    pub terminal: ChainTerminal,
}

impl PossessionChain {
    pub fn from_events(events: Vec<EventRecord>) -> Self {
        let terminal = match events.last() {
            Some(e) if e.action_kind == ActionKind::Shot && e.is_goal => ChainTerminal::Goal,
            Some(e) if e.action_kind == ActionKind::Shot => ChainTerminal::ShotMissed,
            Some(e) if !e.success => ChainTerminal::Turnover,
            _ => ChainTerminal::Truncated,
        };
        Self { events, terminal }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AssembledChains {
    pub chains: Vec<PossessionChain>,
    /// Chains split because events followed a shot in the same possession.
    pub post_shot_splits: usize,
}

/// Groups sorted events into possession chains.
pub fn assemble_chains(events: &[EventRecord]) -> AssembledChains {
    let mut out = AssembledChains::default();
    let mut current: Vec<EventRecord> = Vec::new();
    for e in events {
        let split = match current.last() {
            None => false,
            Some(last) if !last.same_possession(e) => true,
            Some(last) if last.action_kind == ActionKind::Shot => {
                out.post_shot_splits += 1;
                true
            }
            Some(_) => false,
        };
        if split {
            out.chains.push(PossessionChain::from_events(std::mem::take(&mut current)));
        }
        current.push(e.clone());
    }
    if !current.is_empty() {
        out.chains.push(PossessionChain::from_events(current));
    }
    if out.post_shot_splits > 0 {
        log::warn!("{} possessions continued after a shot and were split", out.post_shot_splits);
    }
    out
}

pub const MINUTES_SCHEMA: &str = "# schema: xtq.minutes/1";

/// Minutes played and primary position per player.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MinutesLedger {
    pub minutes: BTreeMap<String, f64>,
    pub positions: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct LedgerRow {
    player_id: String,
    position: String,
    minutes: f64,
}

impl MinutesLedger {
    pub fn insert(&mut self, player_id: &str, position: &str, minutes: f64) {
        *self.minutes.entry(player_id.to_owned()).or_insert(0.0) += minutes;
        self.positions.insert(player_id.to_owned(), position.to_owned());
    }

    /// Reads `player_id,position,minutes` CSV with a header row.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let mut ledger = MinutesLedger::default();
        for (i, row) in rdr.deserialize::<LedgerRow>().enumerate() {
            let row = row.map_err(|e| Error::Parse { line: i + 2, msg: e.to_string() })?;
            if !row.minutes.is_finite() || row.minutes < 0.0 {
                return Err(Error::Parse { line: i + 2, msg: format!("negative minutes for {}", row.player_id) });
            }
            ledger.insert(&row.player_id, &row.position, row.minutes);
        }
        Ok(ledger)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{MINUTES_SCHEMA}")?;
        let mut wtr = csv::Writer::from_writer(w);
        for (id, minutes) in &self.minutes {
            wtr.serialize(LedgerRow {
                player_id: id.clone(),
                position: self.positions.get(id).cloned().unwrap_or_default(),
                minutes: *minutes,
            })
            .map_err(|e| Error::Io(e.into()))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE: &str = r#"{"match_id":"m1","possession_id":"1","team_id":"a","player_id":"p1","minute_offset":1.0,"action_kind":"pass","x0":0.5,"y0":0.5,"x1":0.6,"y1":0.5,"success":true,"is_goal":false}
{"match_id":"m1","possession_id":"1","team_id":"a","player_id":"p2","minute_offset":1.1,"action_kind":"dribble","x0":0.6,"y0":0.5,"x1":0.9,"y1":0.5,"success":true,"is_goal":false}
{"match_id":"m1","possession_id":"1","team_id":"a","player_id":"p2","minute_offset":1.2,"action_kind":"shot","x0":0.9,"y0":0.5,"x1":0.9,"y1":0.5,"success":true,"is_goal":true}
"#;

    fn parse(s: &str) -> Result<ParsedEvents> {
        parse_events(s.as_bytes(), EventFormat::NeutralJsonl, "test")
    }

    #[test]
    fn empty_stream() {
        let p = parse("").unwrap();
        assert!(p.events.is_empty());
        assert_eq!(p.skipped, 0);
    }

    #[test]
    fn three_lines_in_order() {
        let p = parse(THREE).unwrap();
        let kinds: Vec<_> = p.events.iter().map(|e| e.action_kind).collect();
        assert_eq!(kinds, [ActionKind::Pass, ActionKind::Dribble, ActionKind::Shot]);
        assert_eq!(p.events[2].end, p.events[2].start);
    }

    #[test]
    fn foul_is_skipped() {
        let mut lines: Vec<&str> = THREE.lines().collect();
        lines[1] = r#"{"match_id":"m1","possession_id":"1","team_id":"a","player_id":"p2","minute_offset":1.1,"action_kind":"foul","x0":0.6,"y0":0.5,"x1":0.9,"y1":0.5,"success":true,"is_goal":false}"#;
        let p = parse(&lines.join("\n")).unwrap();
        assert_eq!(p.events.len(), 2);
        assert_eq!(p.skipped, 1);
    }

    #[test]
    fn malformed_reports_line() {
        let s = format!("{}\n{{\"match_id\": 3}}\n", THREE.lines().next().unwrap());
        match parse(&s) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let goal_pass = THREE.lines().next().unwrap().replace(r#""is_goal":false"#, r#""is_goal":true"#);
        assert!(matches!(parse(&goal_pass), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn clamps_and_sorts() {
        let s = r#"{"match_id":"m2","possession_id":"1","team_id":"a","player_id":"p","minute_offset":5.0,"action_kind":"pass","x0":1.2,"y0":-0.1,"x1":0.5,"y1":0.5,"success":true,"is_goal":false}
{"match_id":"m1","possession_id":"1","team_id":"a","player_id":"p","minute_offset":9.0,"action_kind":"pass","x0":0.1,"y0":0.1,"x1":0.5,"y1":0.5,"success":true,"is_goal":false}
{"match_id":"m1","possession_id":"1","team_id":"a","player_id":"p","minute_offset":2.0,"action_kind":"pass","x0":0.1,"y0":0.1,"x1":0.5,"y1":0.5,"success":true,"is_goal":false}"#;
        let p = parse(s).unwrap();
        let order: Vec<_> = p.events.iter().map(|e| (e.match_id.as_str(), e.minute_offset)).collect();
        assert_eq!(order, [("m1", 2.0), ("m1", 9.0), ("m2", 5.0)]);
        assert_eq!(p.events[2].start, PitchPoint::new(1.0, 0.0));
    }

    #[test]
    fn neutral_round_trip() {
        let p = parse(THREE).unwrap();
        let mut buf = Vec::new();
        write_neutral(&mut buf, &p.events).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), THREE);
        assert_eq!(parse(std::str::from_utf8(&buf).unwrap()).unwrap().events, p.events);
    }

    #[test]
    fn chains() {
        assert!(assemble_chains(&[]).chains.is_empty());
        let p = parse(THREE).unwrap();
        let c = assemble_chains(&p.events);
        assert_eq!(c.chains.len(), 1);
        assert_eq!(c.chains[0].terminal, ChainTerminal::Goal);

        let mut fail = p.events[0].clone();
        fail.success = false;
        let c = assemble_chains(&[fail]);
        assert_eq!(c.chains[0].terminal, ChainTerminal::Turnover);

        // events after a shot in the same possession start a new chain
        let mut ev = p.events.clone();
        let mut after = p.events[0].clone();
        after.minute_offset = 2.0;
        ev.push(after);
        let c = assemble_chains(&ev);
        assert_eq!(c.chains.len(), 2);
        assert_eq!(c.post_shot_splits, 1);
        assert_eq!(c.chains[1].terminal, ChainTerminal::Truncated);
        assert_eq!(c.chains.iter().map(|c| c.events.len()).sum::<usize>(), ev.len());
    }

    #[test]
    fn statsbomb_adapter() {
        let js = r#"[
 {"type":{"id":35,"name":"Starting XI"},"minute":0,"second":0,"possession":1,"team":{"id":1,"name":"A"}},
 {"type":{"id":30,"name":"Pass"},"minute":0,"second":30,"possession":2,"team":{"id":1,"name":"A"},"player":{"id":7,"name":"P"},"location":[60.0,40.0],"pass":{"end_location":[90.0,20.0]}},
 {"type":{"id":43,"name":"Carry"},"minute":0,"second":32,"possession":2,"team":{"id":1,"name":"A"},"player":{"id":8,"name":"Q"},"location":[90.0,20.0],"carry":{"end_location":[108.0,40.0]}},
 {"type":{"id":16,"name":"Shot"},"minute":0,"second":35,"possession":2,"team":{"id":1,"name":"A"},"player":{"id":8,"name":"Q"},"location":[108.0,40.0],"shot":{"outcome":{"id":97,"name":"Goal"}}},
 {"type":{"id":30,"name":"Pass"},"minute":1,"second":0,"possession":3,"team":{"id":2,"name":"B"},"player":{"id":9,"name":"R"},"location":[130.0,40.0],"pass":{"end_location":[90.0,20.0],"outcome":{"id":9,"name":"Incomplete"}}}
]"#;
        let p = parse_events(js.as_bytes(), EventFormat::StatsbombJson, "123").unwrap();
        assert_eq!(p.skipped, 1);
        assert_eq!(p.events.len(), 4);
        assert_eq!(p.events[0].start, PitchPoint::new(0.5, 0.5));
        assert_eq!(p.events[0].end, PitchPoint::new(0.75, 0.25));
        assert!(p.events[0].success);
        assert_eq!(p.events[1].action_kind, ActionKind::Dribble);
        assert!(p.events[2].is_goal);
        assert!(!p.events[3].success);
        assert_eq!(p.events[3].start.x, 1.0);
        assert_eq!(p.events[0].match_id, "123");
        assert_eq!(p.events[0].player_id, "7");
        let c = assemble_chains(&p.events);
        assert_eq!(c.chains.len(), 2);
    }

    #[test]
    fn ledger_csv() {
        let s = "player_id,position,minutes\np1,MF,450\np2,FW,120.5\n";
        let l = MinutesLedger::read_csv(s.as_bytes()).unwrap();
        assert_eq!(l.minutes["p2"], 120.5);
        assert_eq!(l.positions["p1"], "MF");
        let mut buf = Vec::new();
        l.write_csv(&mut buf).unwrap();
        assert_eq!(MinutesLedger::read_csv(buf.as_slice()).unwrap(), l);
        assert!(MinutesLedger::read_csv("player_id,position,minutes\np,MF,-1\n".as_bytes()).is_err());
    }
}
