//! PLY point clouds, STL triangle meshes and CSV tables.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::postprocess::{AngleProfile, CrackSurface, PointSet, SurfaceDistances};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
    BinaryBigEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return Err(Error::format("PLY", format!("unknown scalar type '{s}'"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn decode(self, b: &[u8], little: bool) -> f64 {
        macro_rules! get {
            ($t:ty, $n:expr) => {{
                let a: [u8; $n] = b[..$n].try_into().unwrap();
                (if little { <$t>::from_le_bytes(a) } else { <$t>::from_be_bytes(a) }) as f64
            }};
        }
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => get!(i16, 2),
            Scalar::U16 => get!(u16, 2),
            Scalar::I32 => get!(i32, 4),
            Scalar::U32 => get!(u32, 4),
            Scalar::F32 => get!(f32, 4),
            Scalar::F64 => get!(f64, 8),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, kind: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

fn ply_err(msg: impl Into<String>) -> Error {
    Error::format("PLY", msg)
}

/// Reads the `vertex` element of an ASCII or binary PLY file: `x`, `y`, `z`
/// and, when present, `nx`, `ny`, `nz` and `red`, `green`, `blue`. Other
/// elements are skipped.
pub fn read_ply(mut r: impl BufRead) -> Result<PointSet> {
    let mut line = Vec::new();
    let mut next_line = |r: &mut dyn BufRead| -> Result<String> {
        line.clear();
        if r.read_until(b'\n', &mut line)? == 0 {
            return Err(ply_err("unexpected end of header"));
        }
        Ok(String::from_utf8_lossy(&line).trim().to_string())
    };
    if next_line(&mut r)? != "ply" {
        return Err(ply_err("missing 'ply' magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let l = next_line(&mut r)?;
        let tok: Vec<&str> = l.split_whitespace().collect();
        match tok.as_slice() {
            ["format", f, _] => {
                encoding = Some(match *f {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLittleEndian,
                    "binary_big_endian" => PlyEncoding::BinaryBigEndian,
                    _ => return Err(ply_err(format!("unknown format '{f}'"))),
                })
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| ply_err(format!("bad element count '{count}'")))?,
                properties: Vec::new(),
            }),
            ["property", "list", count, item, _] => {
                let e = elements.last_mut().ok_or_else(|| ply_err("property before element"))?;
                e.properties.push(Property::List { count: Scalar::parse(count)?, item: Scalar::parse(item)? });
            }
            ["property", kind, name] => {
                let e = elements.last_mut().ok_or_else(|| ply_err("property before element"))?;
                e.properties.push(Property::Scalar { name: name.to_string(), kind: Scalar::parse(kind)? });
            }
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => return Err(ply_err(format!("unexpected header line '{l}'"))),
        }
    }
    let encoding = encoding.ok_or_else(|| ply_err("missing format line"))?;
    let vertex = elements.iter().position(|e| e.name == "vertex").ok_or_else(|| ply_err("no vertex element"))?;
    let names: Vec<Option<&str>> = elements[vertex]
        .properties
        .iter()
        .map(|p| match p {
            Property::Scalar { name, .. } => Some(name.as_str()),
            Property::List { .. } => None,
        })
        .collect();
    let find = |n: &str| names.iter().position(|&x| x == Some(n));
    let xyz = [find("x"), find("y"), find("z")];
    if xyz.iter().any(|i| i.is_none()) {
        return Err(ply_err("vertex element lacks x, y or z"));
    }
    let xyz = xyz.map(|i| i.unwrap());
    let nrm = [find("nx"), find("ny"), find("nz")];
    let rgb = [find("red"), find("green"), find("blue")];
    let has_n = nrm.iter().all(|i| i.is_some());
    let has_c = rgb.iter().all(|i| i.is_some());

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(elements[vertex].count);
    match encoding {
        PlyEncoding::Ascii => {
            let mut body = String::new();
            r.read_to_string(&mut body)?;
            let mut tokens = body.split_whitespace();
            let mut num = |what: &str| -> Result<f64> {
                let t = tokens.next().ok_or_else(|| ply_err(format!("truncated {what} data")))?;
                t.parse::<f64>().map_err(|_| ply_err(format!("bad number '{t}'")))
            };
            for (ei, e) in elements.iter().enumerate() {
                for _ in 0..e.count {
                    let mut row = Vec::new();
                    for p in &e.properties {
                        match p {
                            Property::Scalar { .. } => row.push(num(&e.name)?),
                            Property::List { .. } => {
                                let n = num(&e.name)? as usize;
                                for _ in 0..n {
                                    num(&e.name)?;
                                }
                                row.push(f64::NAN);
                            }
                        }
                    }
                    if ei == vertex {
                        rows.push(row);
                    }
                }
            }
        }
        PlyEncoding::BinaryLittleEndian | PlyEncoding::BinaryBigEndian => {
            let little = encoding == PlyEncoding::BinaryLittleEndian;
            let mut buf = [0u8; 8];
            let mut read = |r: &mut dyn BufRead, k: Scalar| -> Result<f64> {
                r.read_exact(&mut buf[..k.size()]).map_err(|_| ply_err("truncated binary data"))?;
                Ok(k.decode(&buf, little))
            };
            for (ei, e) in elements.iter().enumerate() {
                if ei > vertex {
                    break;
                }
                for _ in 0..e.count {
                    let mut row = Vec::new();
                    for p in &e.properties {
                        match *p {
                            Property::Scalar { kind, .. } => row.push(read(&mut r, kind)?),
                            Property::List { count, item } => {
                                let n = read(&mut r, count)? as usize;
                                for _ in 0..n {
                                    read(&mut r, item)?;
                                }
                                row.push(f64::NAN);
                            }
                        }
                    }
                    if ei == vertex {
                        rows.push(row);
                    }
                }
            }
        }
    }
    let pick = |row: &Vec<f64>, idx: [usize; 3]| -> Point { idx.map(|i| row[i]) };
    let points: Vec<Point> = rows.iter().map(|r| pick(r, xyz)).collect();
    if points.iter().flatten().any(|c| !c.is_finite()) {
        return Err(ply_err("non-finite vertex coordinate"));
    }
    Ok(PointSet {
        normals: has_n.then(|| rows.iter().map(|r| pick(r, nrm.map(|i| i.unwrap()))).collect()),
        colors: has_c.then(|| rows.iter().map(|r| rgb.map(|i| r[i.unwrap()].clamp(0.0, 255.0) as u8)).collect()),
        points,
    })
}

/// Writes the point set as PLY with `double` coordinates and normals and
/// `uchar` colors.
pub fn write_ply(mut w: impl Write, set: &PointSet, encoding: PlyEncoding) -> Result<()> {
    let n = set.points.len();
    if set.normals.as_ref().is_some_and(|v| v.len() != n) || set.colors.as_ref().is_some_and(|v| v.len() != n) {
        return Err(Error::InvalidArgument("point attributes do not match the point count".into()));
    }
    let format = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
        PlyEncoding::BinaryBigEndian => "binary_big_endian",
    };
    writeln!(w, "ply\nformat {format} 1.0\nelement vertex {n}")?;
    writeln!(w, "property double x\nproperty double y\nproperty double z")?;
    if set.normals.is_some() {
        writeln!(w, "property double nx\nproperty double ny\nproperty double nz")?;
    }
    if set.colors.is_some() {
        writeln!(w, "property uchar red\nproperty uchar green\nproperty uchar blue")?;
    }
    writeln!(w, "end_header")?;
    for i in 0..n {
        let mut vals: Vec<f64> = set.points[i].to_vec();
        if let Some(nv) = &set.normals {
            vals.extend_from_slice(&nv[i]);
        }
        let color = set.colors.as_ref().map(|c| c[i]);
        match encoding {
            PlyEncoding::Ascii => {
                let mut line: Vec<String> = vals.iter().map(|v| format!("{v:?}")).collect();
                if let Some(c) = color {
                    line.extend(c.iter().map(|v| v.to_string()));
                }
                writeln!(w, "{}", line.join(" "))?;
            }
            PlyEncoding::BinaryLittleEndian | PlyEncoding::BinaryBigEndian => {
                let little = encoding == PlyEncoding::BinaryLittleEndian;
                for v in vals {
                    w.write_all(&if little { v.to_le_bytes() } else { v.to_be_bytes() })?;
                }
                if let Some(c) = color {
                    w.write_all(&c)?;
                }
            }
        }
    }
    Ok(())
}

const STL_TAG: &str = "vnotch crack surface";

/// Binary STL with single-precision coordinates. The header records the
/// iso-level and step.
pub fn write_stl(mut w: impl Write, surface: &CrackSurface) -> Result<()> {
    let mut header = format!("{STL_TAG} level={:?} step={}", surface.level, surface.step).into_bytes();
    header.resize(80, b' ');
    w.write_all(&header[..80])?;
    let count = u32::try_from(surface.triangles.len())
        .map_err(|_| Error::InvalidArgument("too many triangles for STL".into()))?;
    w.write_all(&count.to_le_bytes())?;
    for (t, n) in surface.triangles.iter().zip(surface.normals()) {
        for c in n.iter().chain(t.iter().flatten()) {
            w.write_all(&(*c as f32).to_le_bytes())?;
        }
        w.write_all(&0u16.to_le_bytes())?;
    }
    Ok(())
}

fn stl_err(msg: impl Into<String>) -> Error {
    Error::format("STL", msg)
}

/// Reads binary or ASCII STL. Level and step are restored from headers
/// written by [`write_stl`] and are zero otherwise.
pub fn read_stl(mut r: impl Read) -> Result<CrackSurface> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let binary = bytes.len() >= 84 && {
        let n = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
        n.checked_mul(50).and_then(|b| b.checked_add(84)) == Some(bytes.len())
    };
    if binary {
        let header = String::from_utf8_lossy(&bytes[..80]).to_string();
        let (level, step) = parse_stl_header(&header);
        let n = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
        let f = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as f64;
        let triangles = (0..n)
            .map(|i| {
                let base = 84 + 50 * i + 12;
                std::array::from_fn(|v| std::array::from_fn(|k| f(base + 12 * v + 4 * k)))
            })
            .collect();
        return Ok(CrackSurface { triangles, level, step });
    }
    let text = std::str::from_utf8(&bytes).map_err(|_| stl_err("neither binary nor ASCII STL"))?;
    if !text.trim_start().starts_with("solid") {
        return Err(stl_err("neither binary nor ASCII STL"));
    }
    let mut vertices = Vec::new();
    for l in text.lines() {
        let tok: Vec<&str> = l.split_whitespace().collect();
        if tok.first() == Some(&"vertex") {
            if tok.len() != 4 {
                return Err(stl_err(format!("bad vertex line '{}'", l.trim())));
            }
            let mut p = [0.0; 3];
            for k in 0..3 {
                p[k] = tok[k + 1].parse().map_err(|_| stl_err(format!("bad number '{}'", tok[k + 1])))?;
            }
            vertices.push(p);
        }
    }
    if vertices.len() % 3 != 0 {
        return Err(stl_err("vertex count is not a multiple of three"));
    }
    let triangles = vertices.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok(CrackSurface { triangles, level: 0.0, step: 0 })
}

fn parse_stl_header(header: &str) -> (f64, usize) {
    if !header.starts_with(STL_TAG) {
        return (0.0, 0);
    }
    let mut level = 0.0;
    let mut step = 0;
    for tok in header.split_whitespace() {
        if let Some(v) = tok.strip_prefix("level=") {
            level = v.parse().unwrap_or(0.0);
        } else if let Some(v) = tok.strip_prefix("step=") {
            step = v.parse().unwrap_or(0);
        }
    }
    (level, step)
}

pub fn write_angle_profile_csv(mut w: impl Write, profile: &AngleProfile) -> Result<()> {
    writeln!(w, "# vnotch angle-profile v1\nz_mm,alpha_deg,theta_deg,initiation_height_mm")?;
    for s in &profile.samples {
        writeln!(w, "{:?},{:?},{:?},{:?}", s.z, s.alpha_deg, s.theta_deg, s.initiation_height)?;
    }
    Ok(())
}

pub fn write_distances_csv(mut w: impl Write, d: &SurfaceDistances) -> Result<()> {
    writeln!(w, "# vnotch surface-distances v1\nx_mm,y_mm,z_mm,distance_mm,distance_normalized")?;
    for (p, (v, n)) in d.vertices.iter().zip(d.distances.iter().zip(d.normalized())) {
        writeln!(w, "{:?},{:?},{:?},{:?},{:?}", p[0], p[1], p[2], v, n)?;
    }
    Ok(())
}
