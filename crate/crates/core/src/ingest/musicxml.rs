//! Reader and writer for the partwise MusicXML subset used by lead sheets:
//! notes, rests, backup/forward, divisions, key, time and harmony symbols.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use num_integer::Integer;
use num_rational::Rational64;
use roxmltree::{Document, Node};

use super::{HarmonyEvent, KeyMode, KeySegment, Score};
use crate::error::{MusicError, ParseError};
use crate::music::{simplify_chord, Bar, DegreeAlteration, NoteEvent, PitchClass};

/// Reads a `.musicxml`/`.xml` file or a compressed `.mxl` container.
pub fn read_score_file(path: &Path) -> Result<Score, ParseError> {
    let bytes = std::fs::read(path)?;
    let is_mxl = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("mxl"))
        .unwrap_or(false);
    if is_mxl {
        let xml = extract_mxl(&bytes)?;
        parse_musicxml(xml.as_bytes())
    } else {
        parse_musicxml(&bytes)
    }
}

fn read_entry<R: Read + std::io::Seek>(
    archive: &mut zip::ZipArchive<R>,
    name: &str,
) -> Result<String, ParseError> {
    let mut entry = archive
        .by_name(name)
        .map_err(|e| ParseError::Archive(format!("{name}: {e}")))?;
    let mut text = String::new();
    entry.read_to_string(&mut text)?;
    Ok(text)
}

fn extract_mxl(bytes: &[u8]) -> Result<String, ParseError> {
    let mut archive = zip::ZipArchive::new(std::io::Cursor::new(bytes))
        .map_err(|e| ParseError::Archive(e.to_string()))?;
    let rootfile = match read_entry(&mut archive, "META-INF/container.xml") {
        Ok(container) => {
            let doc = Document::parse(&container).map_err(|e| ParseError::Xml(e.to_string()))?;
            doc.descendants()
                .find(|n| n.has_tag_name("rootfile"))
                .and_then(|n| n.attribute("full-path"))
                .map(str::to_string)
        }
        Err(_) => None,
    };
    let rootfile = match rootfile {
        Some(r) => r,
        None => archive
            .file_names()
            .find(|n| !n.starts_with("META-INF") && n.ends_with(".xml"))
            .map(str::to_string)
            .ok_or_else(|| ParseError::Archive("no score inside container".into()))?,
    };
    read_entry(&mut archive, &rootfile)
}

struct PartScan {
    bars: Vec<Bar>,
    harmony: Vec<HarmonyEvent>,
    keys: Vec<KeySegment>,
    divisions: Option<i64>,
    has_notes: bool,
}

/// Parses a partwise MusicXML document. The first part containing notes is
/// the melody; harmony symbols are collected from every part.
pub fn parse_musicxml(document: &[u8]) -> Result<Score, ParseError> {
    let text = std::str::from_utf8(document).map_err(|e| ParseError::Xml(e.to_string()))?;
    let text = text.trim_start_matches('\u{feff}');
    let doc = Document::parse(text).map_err(|e| ParseError::Xml(e.to_string()))?;
    let root = doc.root_element();
    if !root.has_tag_name("score-partwise") {
        return Err(ParseError::Structure(format!(
            "root element is <{}>",
            root.tag_name().name()
        )));
    }
    let title = root
        .descendants()
        .find(|n| n.has_tag_name("work-title") || n.has_tag_name("movement-title"))
        .and_then(|n| n.text())
        .unwrap_or("")
        .trim()
        .to_string();

    let parts: Vec<Node> = root.children().filter(|n| n.has_tag_name("part")).collect();
    if parts.is_empty() {
        return Err(ParseError::Structure("no <part> element".into()));
    }
    let scans = parts.iter().map(scan_part).collect::<Result<Vec<_>, _>>()?;

    let melody_index = scans.iter().position(|s| s.has_notes).unwrap_or(0);
    let melody = &scans[melody_index];
    let divisions = melody
        .divisions
        .or_else(|| scans.iter().find_map(|s| s.divisions))
        .ok_or_else(|| ParseError::Bar {
            bar: 0,
            message: "missing <divisions>".into(),
        })?;

    let bar_count = melody.bars.len();
    let mut harmony: Vec<HarmonyEvent> = scans
        .iter()
        .flat_map(|s| s.harmony.iter().cloned())
        .filter(|h| h.bar_index < bar_count)
        .collect();
    harmony.sort_by_key(|a| (a.bar_index, a.offset));

    let mut key_segments = melody.keys.clone();
    if key_segments.is_empty() {
        key_segments = scans
            .iter()
            .find(|s| !s.keys.is_empty())
            .map(|s| s.keys.clone())
            .unwrap_or_else(|| vec![KeySegment::c_major()]);
    }

    Ok(Score {
        title,
        divisions,
        key_segments,
        bars: melody.bars.clone(),
        harmony,
    })
}

fn child<'a, 'input>(node: Node<'a, 'input>, name: &str) -> Option<Node<'a, 'input>> {
    node.children().find(|n| n.has_tag_name(name))
}

fn child_text<'a>(node: Node<'a, '_>, name: &str) -> Option<&'a str> {
    child(node, name).and_then(|n| n.text()).map(str::trim)
}

fn parse_int(bar: usize, what: &str, text: Option<&str>) -> Result<i64, ParseError> {
    let text = text.ok_or_else(|| ParseError::Bar {
        bar,
        message: format!("missing <{what}>"),
    })?;
    text.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite() && v.fract() == 0.0)
        .map(|v| v as i64)
        .ok_or_else(|| ParseError::Bar {
            bar,
            message: format!("<{what}> is not an integer: {text:?}"),
        })
}

fn step_value(step: &str) -> Option<i64> {
    Some(match step {
        "C" => 0,
        "D" => 2,
        "E" => 4,
        "F" => 5,
        "G" => 7,
        "A" => 9,
        "B" => 11,
        _ => return None,
    })
}

fn key_from_fifths(fifths: i64, mode: KeyMode) -> PitchClass {
    let major = PitchClass::wrapping(7 * fifths);
    match mode {
        KeyMode::Major => major,
        KeyMode::Minor => major.transpose(9),
    }
}

fn fifths_for_key(root: PitchClass, mode: KeyMode) -> i64 {
    let major = match mode {
        KeyMode::Major => root,
        KeyMode::Minor => root.transpose(3),
    };
    let f = (7 * major.value() as i64).rem_euclid(12);
    if f > 6 {
        f - 12
    } else {
        f
    }
}

fn scan_part(part: &Node) -> Result<PartScan, ParseError> {
    let mut scan = PartScan {
        bars: Vec::new(),
        harmony: Vec::new(),
        keys: Vec::new(),
        divisions: None,
        has_notes: false,
    };
    let mut divisions: Option<i64> = None;
    for (bar_index, measure) in part
        .children()
        .filter(|n| n.has_tag_name("measure"))
        .enumerate()
    {
        let mut notes = Vec::new();
        let mut cursor: i64 = 0;
        let mut last_onset: i64 = 0;
        let need_divisions = |d: Option<i64>| {
            d.ok_or_else(|| ParseError::Bar {
                bar: bar_index,
                message: "missing <divisions>".into(),
            })
        };
        for el in measure.children().filter(Node::is_element) {
            match el.tag_name().name() {
                "attributes" => {
                    if let Some(d) = child_text(el, "divisions") {
                        let d = parse_int(bar_index, "divisions", Some(d))?;
                        if d <= 0 {
                            return Err(ParseError::Bar {
                                bar: bar_index,
                                message: format!("non-positive divisions {d}"),
                            });
                        }
                        divisions = Some(d);
                        scan.divisions.get_or_insert(d);
                    }
                    if let Some(key) = child(el, "key") {
                        if let Some(fifths) = child_text(key, "fifths") {
                            let fifths = parse_int(bar_index, "fifths", Some(fifths))?;
                            let mode = match child_text(key, "mode") {
                                Some("minor") => KeyMode::Minor,
                                _ => KeyMode::Major,
                            };
                            let segment = KeySegment {
                                start_bar: bar_index,
                                root: key_from_fifths(fifths, mode),
                                mode,
                            };
                            match scan.keys.last() {
                                Some(k) if k.root == segment.root && k.mode == segment.mode => {}
                                Some(k) if k.start_bar == bar_index => {
                                    *scan.keys.last_mut().expect("non-empty") = segment;
                                }
                                _ => scan.keys.push(segment),
                            }
                        }
                    }
                }
                "backup" => {
                    let d = parse_int(bar_index, "duration", child_text(el, "duration"))?;
                    cursor = (cursor - d).max(0);
                }
                "forward" => {
                    let d = parse_int(bar_index, "duration", child_text(el, "duration"))?;
                    cursor += d;
                }
                "harmony" => {
                    let div = need_divisions(divisions)?;
                    let chord = parse_harmony(el, bar_index)?;
                    let offset = child_text(el, "offset")
                        .map(|o| parse_int(bar_index, "offset", Some(o)))
                        .transpose()?
                        .unwrap_or(0);
                    scan.harmony.push(HarmonyEvent {
                        bar_index,
                        offset: Rational64::new((cursor + offset).max(0), div),
                        chord,
                    });
                }
                "note" => {
                    if child(el, "grace").is_some() {
                        continue;
                    }
                    let duration = match child_text(el, "duration") {
                        Some(d) => parse_int(bar_index, "duration", Some(d))?,
                        None => continue,
                    };
                    let div = need_divisions(divisions)?;
                    let is_chord_tone = child(el, "chord").is_some();
                    let onset = if is_chord_tone { last_onset } else { cursor };
                    if let Some(pitch) = child(el, "pitch") {
                        let midi = parse_pitch(pitch, bar_index)?;
                        if duration > 0 {
                            let velocity = el
                                .attribute("dynamics")
                                .and_then(|d| d.parse::<f64>().ok())
                                .map(|d| ((d * 90.0 / 100.0).round() as i64).clamp(0, 127) as u8)
                                .unwrap_or(80);
                            let note = NoteEvent::new(
                                midi,
                                Rational64::new(onset, div),
                                Rational64::new(duration, div),
                                velocity,
                            )
                            .map_err(|e| bar_error(bar_index, e))?;
                            notes.push(note);
                            scan.has_notes = true;
                        }
                    }
                    if !is_chord_tone {
                        last_onset = cursor;
                        cursor += duration;
                    }
                }
                _ => {}
            }
        }
        scan.bars.push(Bar::new(bar_index, notes));
    }
    Ok(scan)
}

fn bar_error(bar: usize, e: MusicError) -> ParseError {
    ParseError::Bar {
        bar,
        message: e.to_string(),
    }
}

fn parse_pitch(pitch: Node, bar: usize) -> Result<u8, ParseError> {
    let step = child_text(pitch, "step").unwrap_or("");
    let base = step_value(step).ok_or_else(|| ParseError::Bar {
        bar,
        message: format!("unknown pitch step {step:?}"),
    })?;
    let alter = child_text(pitch, "alter")
        .map(|a| {
            a.parse::<f64>()
                .map(|v| v.round() as i64)
                .map_err(|_| ParseError::Bar {
                    bar,
                    message: format!("bad <alter> {a:?}"),
                })
        })
        .transpose()?
        .unwrap_or(0);
    let octave = parse_int(bar, "octave", child_text(pitch, "octave"))?;
    let midi = (octave + 1) * 12 + base + alter;
    if !(0..=127).contains(&midi) {
        return Err(bar_error(bar, MusicError::MidiPitchOutOfRange(midi)));
    }
    Ok(midi as u8)
}

fn parse_harmony(el: Node, bar: usize) -> Result<crate::music::Chord, ParseError> {
    let root = child(el, "root").ok_or_else(|| ParseError::Bar {
        bar,
        message: "harmony without <root>".into(),
    })?;
    let step = child_text(root, "root-step").unwrap_or("");
    let base = step_value(step).ok_or_else(|| ParseError::Bar {
        bar,
        message: format!("unknown root step {step:?}"),
    })?;
    let alter = child_text(root, "root-alter")
        .and_then(|a| a.parse::<f64>().ok())
        .map(|v| v.round() as i64)
        .unwrap_or(0);
    let kind = child_text(el, "kind").unwrap_or("");
    let kind = if kind.is_empty() {
        // An empty <kind/> with a text attribute still names a major triad in
        // most lead-sheet exports.
        "major"
    } else {
        kind
    };
    let alterations: Vec<DegreeAlteration> = el
        .children()
        .filter(|n| n.has_tag_name("degree"))
        .map(|d| DegreeAlteration {
            value: child_text(d, "degree-value")
                .and_then(|v| v.parse().ok())
                .unwrap_or(0),
            alter: child_text(d, "degree-alter")
                .and_then(|v| v.parse::<f64>().ok())
                .map(|v| v.round() as i32)
                .unwrap_or(0),
            kind: child_text(d, "degree-type").unwrap_or("").to_string(),
        })
        .collect();
    simplify_chord(PitchClass::wrapping(base + alter), kind, &alterations).map_err(|_| {
        ParseError::UnsupportedKind {
            bar,
            kind: kind.to_string(),
        }
    })
}

const SHARP_SPELLING: [(&str, i64); 12] = [
    ("C", 0),
    ("C", 1),
    ("D", 0),
    ("D", 1),
    ("E", 0),
    ("F", 0),
    ("F", 1),
    ("G", 0),
    ("G", 1),
    ("A", 0),
    ("A", 1),
    ("B", 0),
];

fn quality_kind(chord: crate::music::Chord) -> &'static str {
    use crate::music::ChordQuality::*;
    match chord.quality {
        Major => "major",
        Minor => "minor",
        Augmented => "augmented",
        Diminished => "diminished",
        Suspended => "suspended-fourth",
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

enum Item<'a> {
    Harmony(&'a HarmonyEvent),
    Note(&'a NoteEvent),
}

/// Serializes a score as a single-part partwise document. Positions are kept
/// exact with `<backup>`/`<forward>`; the divisions value is widened when an
/// onset or duration does not fit the score's own.
pub fn write_musicxml(score: &Score) -> String {
    let mut divisions = score.divisions.max(1);
    let rationals = score
        .bars
        .iter()
        .flat_map(|b| b.notes.iter().flat_map(|n| [n.onset, n.duration]))
        .chain(score.harmony.iter().map(|h| h.offset));
    for r in rationals {
        divisions = divisions.lcm(r.denom());
    }
    let ticks = |r: Rational64| -> i64 { (r * Rational64::from_integer(divisions)).to_integer() };

    let keys: BTreeMap<usize, &KeySegment> = score
        .key_segments
        .iter()
        .map(|k| (k.start_bar, k))
        .collect();

    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n");
    out.push_str("<score-partwise version=\"3.1\">\n");
    let _ = writeln!(
        out,
        "  <work><work-title>{}</work-title></work>",
        escape(&score.title)
    );
    out.push_str("  <part-list><score-part id=\"P1\"><part-name>Melody</part-name></score-part></part-list>\n");
    out.push_str("  <part id=\"P1\">\n");
    for (position, bar) in score.bars.iter().enumerate() {
        let _ = writeln!(out, "    <measure number=\"{}\">", position + 1);
        let key = keys.get(&bar.index);
        if position == 0 || key.is_some() {
            out.push_str("      <attributes>\n");
            if position == 0 {
                let _ = writeln!(out, "        <divisions>{divisions}</divisions>");
            }
            if let Some(k) = key {
                let mode = match k.mode {
                    KeyMode::Major => "major",
                    KeyMode::Minor => "minor",
                };
                let _ = writeln!(
                    out,
                    "        <key><fifths>{}</fifths><mode>{mode}</mode></key>",
                    fifths_for_key(k.root, k.mode)
                );
            }
            if position == 0 {
                out.push_str("        <time><beats>4</beats><beat-type>4</beat-type></time>\n");
            }
            out.push_str("      </attributes>\n");
        }

        let mut items: Vec<(Rational64, u8, Item)> = score
            .harmony_in_bar(bar.index)
            .map(|h| (h.offset, 0, Item::Harmony(h)))
            .chain(bar.notes.iter().map(|n| (n.onset, 1, Item::Note(n))))
            .collect();
        items.sort_by_key(|a| (a.0, a.1));

        let mut cursor = 0i64;
        if bar.notes.is_empty() && items.is_empty() {
            let _ = writeln!(
                out,
                "      <note><rest measure=\"yes\"/><duration>{}</duration></note>",
                4 * divisions
            );
        }
        for (at, _, item) in items {
            let target = ticks(at);
            if target > cursor {
                let _ = writeln!(
                    out,
                    "      <forward><duration>{}</duration></forward>",
                    target - cursor
                );
            } else if target < cursor {
                let _ = writeln!(
                    out,
                    "      <backup><duration>{}</duration></backup>",
                    cursor - target
                );
            }
            cursor = target;
            match item {
                Item::Harmony(h) => {
                    let (step, alter) = SHARP_SPELLING[h.chord.root.index()];
                    let alter = if alter != 0 {
                        format!("<root-alter>{alter}</root-alter>")
                    } else {
                        String::new()
                    };
                    let _ = writeln!(
                        out,
                        "      <harmony><root><root-step>{step}</root-step>{alter}</root><kind>{}</kind></harmony>",
                        quality_kind(h.chord)
                    );
                }
                Item::Note(n) => {
                    let (step, alter) = SHARP_SPELLING[n.pitch as usize % 12];
                    let octave = n.pitch as i64 / 12 - 1;
                    let alter = if alter != 0 {
                        format!("<alter>{alter}</alter>")
                    } else {
                        String::new()
                    };
                    let duration = ticks(n.duration);
                    let _ = writeln!(
                        out,
                        "      <note><pitch><step>{step}</step>{alter}<octave>{octave}</octave></pitch><duration>{duration}</duration></note>"
                    );
                    cursor += duration;
                }
            }
        }
        out.push_str("    </measure>\n");
    }
    out.push_str("  </part>\n</score-partwise>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_BAR: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<score-partwise version="3.1">
  <part-list><score-part id="P1"><part-name>Lead</part-name></score-part></part-list>
  <part id="P1">
    <measure number="1">
      <attributes><divisions>2</divisions><key><fifths>0</fifths></key></attributes>
      <harmony><root><root-step>C</root-step></root><kind>major</kind></harmony>
      <note><pitch><step>C</step><octave>4</octave></pitch><duration>8</duration></note>
    </measure>
  </part>
</score-partwise>"#;

    #[test]
    fn minimal_document() {
        let score = parse_musicxml(ONE_BAR.as_bytes()).unwrap();
        assert_eq!(score.bars.len(), 1);
        assert_eq!(score.bars[0].notes.len(), 1);
        let n = &score.bars[0].notes[0];
        assert_eq!(n.pitch, 60);
        assert_eq!(n.duration, Rational64::from_integer(4));
        assert_eq!(score.harmony.len(), 1);
        assert_eq!(score.harmony[0].bar_index, 0);
        assert_eq!(score.harmony[0].chord.to_string(), "Cmajor");
    }

    #[test]
    fn two_symbols_in_one_bar_are_kept() {
        let doc = ONE_BAR.replace(
            "<note>",
            "<harmony><root><root-step>G</root-step></root><kind>dominant</kind><offset>4</offset></harmony><note>",
        );
        let score = parse_musicxml(doc.as_bytes()).unwrap();
        let chords: Vec<String> = score.harmony.iter().map(|h| h.chord.to_string()).collect();
        assert_eq!(chords, ["Cmajor", "Gmajor"]);
        assert_eq!(score.harmony[1].offset, Rational64::from_integer(2));
    }

    #[test]
    fn missing_divisions_is_an_error() {
        let doc = ONE_BAR.replace("<divisions>2</divisions>", "");
        let err = parse_musicxml(doc.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("divisions"), "{err}");
        assert!(err.to_string().contains("bar 0"), "{err}");
    }

    #[test]
    fn unsupported_kind_names_the_bar() {
        let doc = ONE_BAR.replace("<kind>major</kind>", "<kind>Tristan</kind>");
        match parse_musicxml(doc.as_bytes()) {
            Err(ParseError::UnsupportedKind { bar, kind }) => {
                assert_eq!(bar, 0);
                assert_eq!(kind, "Tristan");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_xml() {
        assert!(matches!(
            parse_musicxml(b"<score-partwise><part>"),
            Err(ParseError::Xml(_))
        ));
        assert!(matches!(
            parse_musicxml(b"<score-timewise/>"),
            Err(ParseError::Structure(_))
        ));
    }

    #[test]
    fn key_signatures_become_segments() {
        assert_eq!(key_from_fifths(2, KeyMode::Major).value(), 2);
        assert_eq!(key_from_fifths(-3, KeyMode::Major).value(), 3);
        assert_eq!(key_from_fifths(1, KeyMode::Minor).value(), 4);
        for root in PitchClass::all() {
            for mode in [KeyMode::Major, KeyMode::Minor] {
                assert_eq!(key_from_fifths(fifths_for_key(root, mode), mode), root);
            }
        }
    }

    #[test]
    fn chords_backup_and_rests() {
        let doc = r#"<score-partwise><part id="P1">
          <measure>
            <attributes><divisions>1</divisions></attributes>
            <note><pitch><step>C</step><octave>4</octave></pitch><duration>2</duration></note>
            <note><chord/><pitch><step>E</step><octave>4</octave></pitch><duration>2</duration></note>
            <note><rest/><duration>1</duration></note>
            <note><pitch><step>B</step><alter>-1</alter><octave>3</octave></pitch><duration>1</duration></note>
            <backup><duration>4</duration></backup>
            <note><pitch><step>G</step><octave>2</octave></pitch><duration>4</duration></note>
          </measure></part></score-partwise>"#;
        let score = parse_musicxml(doc.as_bytes()).unwrap();
        let notes: Vec<(u8, Rational64)> = score.bars[0]
            .notes
            .iter()
            .map(|n| (n.pitch, n.onset))
            .collect();
        let r = Rational64::from_integer;
        assert_eq!(notes, vec![(60, r(0)), (64, r(0)), (58, r(3)), (43, r(0))]);
    }

    #[test]
    fn harmony_from_another_part() {
        let doc = r#"<score-partwise>
          <part id="P1"><measure><attributes><divisions>1</divisions></attributes>
            <note><pitch><step>A</step><octave>4</octave></pitch><duration>4</duration></note></measure></part>
          <part id="P2"><measure><attributes><divisions>1</divisions></attributes>
            <harmony><root><root-step>F</root-step></root><kind>major-seventh</kind></harmony>
            <note><rest/><duration>4</duration></note></measure></part>
        </score-partwise>"#;
        let score = parse_musicxml(doc.as_bytes()).unwrap();
        assert_eq!(score.harmony[0].chord.to_string(), "Fmajor");
        assert_eq!(score.bars[0].notes[0].pitch, 69);
    }
}
