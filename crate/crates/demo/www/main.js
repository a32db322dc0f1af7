// Built by: wasm-bindgen --target web --out-dir www/pkg <commqcd_demo.wasm>
import init, { binaryRegion, mimoRegion, scsTrace } from "./pkg/commqcd_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function pairs(flat) {
  const out = [];
  for (let i = 0; i < flat.length; i += 2) out.push([flat[i], flat[i + 1]]);
  return out;
}

// Line plot with optional dashed reference segment and horizontal marker.
function plot(canvas, pts, { xlabel, ylabel, chord, hline, vline }) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 48;
  ctx.clearRect(0, 0, w, h);
  const xs = pts.map((p) => p[0]), ys = pts.map((p) => p[1]);
  if (hline !== undefined) ys.push(hline);
  const x0 = Math.min(0, ...xs), x1 = Math.max(...xs) || 1;
  const y0 = Math.min(0, ...ys), y1 = Math.max(...ys) * 1.05 || 1;
  const sx = (x) => pad + ((x - x0) / (x1 - x0)) * (w - 2 * pad);
  const sy = (y) => h - pad - ((y - y0) / (y1 - y0)) * (h - 2 * pad);

  ctx.strokeStyle = "#888";
  ctx.beginPath();
  ctx.moveTo(pad, pad / 2); ctx.lineTo(pad, h - pad); ctx.lineTo(w - pad / 2, h - pad);
  ctx.stroke();
  ctx.fillStyle = "#444";
  ctx.fillText(xlabel, w - pad - 60, h - pad + 30);
  ctx.fillText(ylabel, 6, pad / 2);
  for (const t of [x0, (x0 + x1) / 2, x1]) ctx.fillText(t.toPrecision(3), sx(t) - 10, h - pad + 14);
  for (const t of [y0, (y0 + y1) / 2, y1]) ctx.fillText(t.toPrecision(3), 4, sy(t) + 4);

  if (chord) {
    ctx.setLineDash([5, 4]);
    ctx.strokeStyle = "#999";
    ctx.beginPath();
    ctx.moveTo(sx(chord[0][0]), sy(chord[0][1]));
    ctx.lineTo(sx(chord[1][0]), sy(chord[1][1]));
    ctx.stroke();
    ctx.setLineDash([]);
  }
  if (hline !== undefined) {
    ctx.strokeStyle = "#c33";
    ctx.beginPath(); ctx.moveTo(pad, sy(hline)); ctx.lineTo(w - pad / 2, sy(hline)); ctx.stroke();
  }
  if (vline !== undefined) {
    ctx.strokeStyle = "#36c";
    ctx.beginPath(); ctx.moveTo(sx(vline), pad / 2); ctx.lineTo(sx(vline), h - pad); ctx.stroke();
  }
  ctx.strokeStyle = "#1a5";
  ctx.lineWidth = 2;
  ctx.beginPath();
  pts.forEach(([x, y], i) => (i ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y))));
  ctx.stroke();
  ctx.lineWidth = 1;
}

function guarded(outId, f) {
  return () => {
    const out = $(outId);
    out.classList.remove("err");
    try {
      const t = performance.now();
      const msg = f();
      out.textContent = `${msg}\n(${(performance.now() - t).toFixed(0)} ms)`;
    } catch (e) {
      out.classList.add("err");
      out.textContent = String(e.message ?? e);
    }
  };
}

function region(canvasId, pts) {
  const cap = pts[0], star = pts[pts.length - 1];
  plot($(canvasId), pts, {
    xlabel: "Delta", ylabel: "R",
    chord: [[0, cap[1]], [star[0], 0]],
  });
  return `C = ${cap[1].toFixed(6)} at Delta = ${cap[0].toFixed(6)}\n` +
    `Delta* = ${star[0].toFixed(6)} at R = ${star[1].toFixed(6)}\n${pts.length} points`;
}

await init();

$("b-run").onclick = guarded("b-out", () =>
  region("b-plot", pairs(binaryRegion(num("b-eps"), num("b-eps0"), num("b-eps1")))));

$("m-run").onclick = guarded("m-out", () => {
  const parse = (id) => Float64Array.from($(id).value.split(",").map(Number));
  return region("m-plot", pairs(mimoRegion(num("m-p"), parse("m-g"), parse("m-h"), 80)));
});

$("t-run").onclick = guarded("t-out", () => {
  const nu = num("t-nu");
  const tr = scsTrace(num("t-eps0"), num("t-eps1"), num("t-l"), num("t-k"), num("t-b"), nu, BigInt(num("t-seed")));
  const pts = pairs(tr.points);
  plot($("t-plot"), pts, { xlabel: "i", ylabel: "W", hline: num("t-b"), vline: nu || undefined });
  const n = num("t-l") * num("t-k");
  return tr.stop > n ? "no alarm" : `alarm at i = ${tr.stop}` + (nu && tr.stop >= nu ? `, delay ${tr.stop - nu + 1}` : "");
});

for (const id of ["b-run", "m-run", "t-run"]) $(id).click();
