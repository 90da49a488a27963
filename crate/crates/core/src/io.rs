//! Waveform and result files.
//!
//! Floats are written as `{:.8e}` (nine significant digits) so every emission
//! is byte-stable for identical inputs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::ResultRecord;
use crate::room::Point3;
use crate::signals::Waveform;

pub const RESULTS_HEADER: [&str; 9] = [
    "receiver_x",
    "receiver_y",
    "receiver_z",
    "true_distance_m",
    "estimator",
    "snr_db",
    "trial",
    "estimated_distance_m",
    "abs_error_m",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveformFormat {
    /// Mono 16-bit PCM; samples must lie in `[-1, 1]`.
    WavPcm16,
    /// One sample per row, optionally several snippets as columns, preceded by
    /// a `# sample_rate=<hz> t0=<s>` line.
    CsvFloat,
}

impl WaveformFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "wav" => Some(Self::WavPcm16),
            "csv" | "txt" => Some(Self::CsvFloat),
            _ => None,
        }
    }
}

/// Formats a float with nine significant digits in scientific notation.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.8e}")
}

fn parse_float(field: &str, what: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse(format!("invalid {what}: {field:?}")))
}

fn check_rate(found: f64, expected: Option<f64>) -> Result<()> {
    match expected {
        Some(e) if (e - found).abs() > 1e-9 * e.abs().max(found.abs()) => {
            Err(Error::RateMismatch { expected: e, found })
        }
        _ => Ok(()),
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

/// Writes one or more equally long, equally sampled snippets as CSV columns.
pub fn write_waveforms_csv<W: Write>(out: W, waves: &[&Waveform<f64>]) -> Result<()> {
    let first = waves.first().ok_or_else(|| Error::param("no waveforms to write"))?;
    if waves.iter().any(|w| w.len() != first.len()) {
        return Err(Error::param("CSV columns must have equal length"));
    }
    for w in waves {
        check_rate(w.sample_rate(), Some(first.sample_rate()))?;
    }
    let mut out = BufWriter::new(out);
    writeln!(out, "# sample_rate={} t0={}", fmt_float(first.sample_rate()), fmt_float(first.t0()))?;
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for i in 0..first.len() {
        wtr.write_record(waves.iter().map(|w| fmt_float(w.samples()[i]))).map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads every column of a CSV waveform file. `sample_rate` is required when
/// the file has no rate line and must agree with it otherwise.
pub fn read_waveforms_csv<R: Read>(input: R, sample_rate: Option<f64>) -> Result<Vec<Waveform<f64>>> {
    let mut text = String::new();
    BufReader::new(input).read_to_string(&mut text)?;
    let mut rate = None;
    let mut t0 = 0.0;
    if let Some(meta) = text.lines().next().and_then(|l| l.strip_prefix('#')) {
        for item in meta.split_whitespace() {
            match item.split_once('=') {
                Some(("sample_rate", v)) => rate = Some(parse_float(v, "sample rate")?),
                Some(("t0", v)) => t0 = parse_float(v, "start time")?,
                _ => {}
            }
        }
    }
    let rate = match (rate, sample_rate) {
        (Some(found), expected) => {
            check_rate(found, expected)?;
            found
        }
        (None, Some(given)) => given,
        (None, None) => return Err(Error::Parse("no sample rate in file or arguments".into())),
    };

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        if row == 0 {
            columns = vec![Vec::new(); rec.len()];
        }
        for (col, field) in rec.iter().enumerate() {
            columns[col].push(parse_float(field, &format!("sample at row {}", row + 1))?);
        }
    }
    if columns.is_empty() || columns[0].is_empty() {
        return Err(Error::Parse("waveform file has no samples".into()));
    }
    columns
        .into_iter()
        .map(|c| Waveform::new(c, rate, t0).map_err(|e| Error::Parse(e.to_string())))
        .collect()
}

/// Writes a mono 16-bit WAV. The sample rate is rounded to whole hertz.
pub fn write_wav(path: &Path, w: &Waveform<f64>) -> Result<()> {
    if w.samples().iter().any(|v| v.abs() > 1.0) {
        return Err(Error::param("WAV samples must lie in [-1, 1]; scale the waveform first"));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate().round() as u32,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_error)?;
    for &v in w.samples() {
        writer.write_sample((v * f64::from(i16::MAX)).round() as i16).map_err(wav_error)?;
    }
    writer.finalize().map_err(wav_error)
}

fn wav_error(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io)
            if matches!(io.kind(), std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied) =>
        {
            Error::Io(io)
        }
        other => Error::Parse(format!("WAV: {other}")),
    }
}

/// Reads a mono 16-bit WAV; a short data chunk is a parse error.
pub fn read_wav(path: &Path, sample_rate: Option<f64>) -> Result<Waveform<f64>> {
    let reader = hound::WavReader::open(path).map_err(wav_error)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Parse(format!(
            "expected mono 16-bit PCM, found {} channel(s) at {} bits",
            spec.channels, spec.bits_per_sample
        )));
    }
    check_rate(f64::from(spec.sample_rate), sample_rate)?;
    let declared = reader.len() as usize;
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / f64::from(i16::MAX)))
        .collect::<std::result::Result<Vec<f64>, _>>()
        .map_err(wav_error)?;
    if samples.len() != declared {
        return Err(Error::Parse(format!("WAV declares {declared} samples, found {}", samples.len())));
    }
    if samples.is_empty() {
        return Err(Error::Parse("WAV file has no samples".into()));
    }
    Waveform::new(samples, f64::from(spec.sample_rate), 0.0)
}

/// Every snippet stored in `path`: one per CSV column, or the single WAV channel.
pub fn load_snippets(path: &Path, format: WaveformFormat, sample_rate: Option<f64>) -> Result<Vec<Waveform<f64>>> {
    match format {
        WaveformFormat::CsvFloat => read_waveforms_csv(File::open(path)?, sample_rate),
        WaveformFormat::WavPcm16 => Ok(vec![read_wav(path, sample_rate)?]),
    }
}

/// First snippet stored in `path`.
pub fn load_waveform(path: &Path, format: WaveformFormat, sample_rate: Option<f64>) -> Result<Waveform<f64>> {
    Ok(load_snippets(path, format, sample_rate)?.swap_remove(0))
}

pub fn save_waveform(path: &Path, format: WaveformFormat, w: &Waveform<f64>) -> Result<()> {
    match format {
        WaveformFormat::CsvFloat => write_waveforms_csv(File::create(path)?, &[w]),
        WaveformFormat::WavPcm16 => write_wav(path, w),
    }
}

pub fn write_results<W: Write>(out: W, records: &[ResultRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(BufWriter::new(out));
    wtr.write_record(RESULTS_HEADER).map_err(csv_error)?;
    for r in records {
        wtr.write_record([
            fmt_float(r.receiver.x),
            fmt_float(r.receiver.y),
            fmt_float(r.receiver.z),
            fmt_float(r.true_distance),
            r.estimator.clone(),
            fmt_float(r.snr_db),
            r.trial.to_string(),
            fmt_float(r.estimated_distance),
            fmt_float(r.abs_error),
        ])
        .map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_results(path: &Path, records: &[ResultRecord]) -> Result<()> {
    write_results(File::create(path)?, records)
}

pub fn read_results<R: Read>(input: R) -> Result<Vec<ResultRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(csv_error)?;
    if header.iter().ne(RESULTS_HEADER) {
        return Err(Error::Parse(format!("unexpected results header: {header:?}")));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(csv_error)?;
            let f = |i: usize| parse_float(&rec[i], RESULTS_HEADER[i]);
            Ok(ResultRecord {
                receiver: Point3::new(f(0)?, f(1)?, f(2)?),
                true_distance: f(3)?,
                estimator: rec[4].to_string(),
                snr_db: f(5)?,
                trial: rec[6].parse().map_err(|_| Error::Parse(format!("invalid trial: {:?}", &rec[6])))?,
                estimated_distance: f(7)?,
                abs_error: f(8)?,
            })
        })
        .collect()
}

pub fn load_results(path: &Path) -> Result<Vec<ResultRecord>> {
    read_results(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::summarize;

    fn sine(amplitude: f64) -> Waveform<f64> {
        let s = (0..1000).map(|i| amplitude * (i as f64 * 0.0371).sin()).collect();
        Waveform::new(s, 196_000.0, 0.029).unwrap()
    }

    fn record(rx: f64, est: &str, trial: usize) -> ResultRecord {
        ResultRecord {
            receiver: Point3::new(rx, 0.5, 1.0),
            true_distance: 1.25,
            estimator: est.into(),
            snr_db: if trial == 0 { f64::INFINITY } else { 3.0 },
            trial,
            estimated_distance: 1.25 + 0.001 * trial as f64 - 0.3,
            abs_error: (0.001 * trial as f64 - 0.3).abs(),
        }
    }

    #[test]
    fn csv_round_trip_is_exact_at_nine_digits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        let w = sine(0.0123);
        save_waveform(&path, WaveformFormat::CsvFloat, &w).unwrap();
        let back = load_waveform(&path, WaveformFormat::CsvFloat, Some(196_000.0)).unwrap();
        assert_eq!(back.sample_rate(), 196_000.0);
        assert_eq!(back.t0(), 0.029);
        for (a, b) in w.samples().iter().zip(back.samples()) {
            assert_eq!(fmt_float(*a), fmt_float(*b));
        }
        let again = dir.path().join("w2.csv");
        save_waveform(&again, WaveformFormat::CsvFloat, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }

    #[test]
    fn csv_columns_are_snippets() {
        let a = sine(0.5);
        let b = sine(-0.25);
        let mut buf = Vec::new();
        write_waveforms_csv(&mut buf, &[&a, &b]).unwrap();
        let back = read_waveforms_csv(buf.as_slice(), None).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].len(), 1000);
    }

    #[test]
    fn csv_errors_are_distinct() {
        let text = "# sample_rate=1.96e5\n0.1\n0.2\n";
        assert!(matches!(
            read_waveforms_csv(text.as_bytes(), Some(48_000.0)),
            Err(Error::RateMismatch { .. })
        ));
        assert!(matches!(read_waveforms_csv("0.1\nabc\n".as_bytes(), Some(1.0)), Err(Error::Parse(_))));
        assert!(matches!(read_waveforms_csv("0.1\n0.2\n".as_bytes(), None), Err(Error::Parse(_))));
        assert!(matches!(read_waveforms_csv("0.1,0.2\n0.3\n".as_bytes(), Some(1.0)), Err(Error::Parse(_))));
        assert!(matches!(read_waveforms_csv("".as_bytes(), Some(1.0)), Err(Error::Parse(_))));
        let plain = read_waveforms_csv("0.1\n-0.2\n".as_bytes(), Some(1000.0)).unwrap();
        assert_eq!(plain[0].samples(), &[0.1, -0.2]);
    }

    #[test]
    fn wav_full_scale_sine_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let w = sine(1.0);
        save_waveform(&path, WaveformFormat::WavPcm16, &w).unwrap();
        let back = load_waveform(&path, WaveformFormat::WavPcm16, Some(196_000.0)).unwrap();
        assert_eq!(back.len(), w.len());
        let worst = w.samples().iter().zip(back.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= 2f64.powi(-15), "{worst}");
        assert!(matches!(read_wav(&path, Some(48_000.0)), Err(Error::RateMismatch { .. })));
        assert!(write_wav(&path, &sine(1.5)).is_err());
    }

    #[test]
    fn truncated_wav_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        save_waveform(&path, WaveformFormat::WavPcm16, &sine(0.5)).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 101]).unwrap();
        let err = read_wav(&path, None).unwrap_err();
        assert!(matches!(err, Error::Parse(_)), "{err:?}");
        std::fs::write(&path, &bytes[..20]).unwrap();
        assert!(matches!(read_wav(&path, None), Err(Error::Parse(_))));
    }

    #[test]
    fn empty_results_file_is_header_only() {
        let mut buf = Vec::new();
        write_results(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", RESULTS_HEADER.join(",")));
    }

    #[test]
    fn results_keep_order_and_stats() {
        let records = vec![
            record(0.1, "maximum", 0),
            record(0.1, "prominence(65)", 1),
            record(0.3, "maximum", 2),
            record(0.3, "prominence(65)", 3),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        save_results(&path, &records).unwrap();
        let back = load_results(&path).unwrap();
        assert_eq!(back.len(), 4);
        let again = dir.path().join("r2.csv");
        save_results(&again, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
        let lines: Vec<String> = std::fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
        assert!(lines[1].contains("maximum") && lines[2].contains("prominence(65)"));
        assert!(lines[1].contains(",inf,"));
        let a = summarize(&back.iter().collect::<Vec<_>>()).unwrap();
        let reloaded = load_results(&again).unwrap();
        assert_eq!(a, summarize(&reloaded.iter().collect::<Vec<_>>()).unwrap());
        let original = summarize(&records.iter().collect::<Vec<_>>()).unwrap();
        assert!((a.mean - original.mean).abs() < 1e-9);
        assert!(read_results("a,b\n1,2\n".as_bytes()).is_err());
    }
}
