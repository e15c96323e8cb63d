import init, { partitionDemo, Ensemble1d } from "./pkg/subgp_demo.js";

const $ = (id) => document.getElementById(id);
const field = (form, name) => $(form).querySelector(`[name=${name}]`);
const num = (form, name) => Number(field(form, name).value);

function status(id, text, error = false) {
  const el = $(id);
  el.textContent = text;
  el.className = error ? "status error" : "status";
}

function timed(fn) {
  const t0 = performance.now();
  const out = fn();
  return [out, performance.now() - t0];
}

// maps [x0,x1]×[y0,y1] onto a canvas with a margin, y upwards
function frame(canvas, [x0, x1], [y0, y1], pad = 30) {
  const w = canvas.width - 2 * pad, h = canvas.height - 2 * pad;
  return {
    x: (v) => pad + ((v - x0) / (x1 - x0)) * w,
    y: (v) => pad + h - ((v - y0) / (y1 - y0)) * h,
    inv: (px) => x0 + ((px - pad) / w) * (x1 - x0),
    pad, w, h,
  };
}

function axes(ctx, f, xr, yr) {
  ctx.strokeStyle = "#999";
  ctx.strokeRect(f.pad, f.pad, f.w, f.h);
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText(xr[0].toFixed(1), f.pad, f.pad + f.h + 14);
  ctx.fillText(xr[1].toFixed(1), f.pad + f.w - 16, f.pad + f.h + 14);
  ctx.fillText(yr[0].toFixed(1), 2, f.pad + f.h);
  ctx.fillText(yr[1].toFixed(1), 2, f.pad + 8);
}

function drawPartition() {
  const n = num("part-form", "n");
  const nmin = num("part-form", "nmin");
  const nmax = num("part-form", "nmax");
  const seed = BigInt(num("part-form", "seed"));
  let view, ms;
  try {
    [view, ms] = timed(() => JSON.parse(partitionDemo(n, nmin, nmax, seed)));
  } catch (e) {
    status("part-status", String(e.message ?? e), true);
    return;
  }
  const canvas = $("part-canvas");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const f = frame(canvas, [0, 1], [0, 1], 10);

  ctx.fillStyle = "rgba(30,60,160,0.35)";
  for (const [a, b] of view.points) ctx.fillRect(f.x(a) - 0.75, f.y(b) - 0.75, 1.5, 1.5);

  ctx.lineWidth = 1;
  for (const c of view.cells) {
    ctx.strokeStyle = c.oversize ? "#d33" : "#333";
    const x = f.x(c.lower[0]), y = f.y(c.upper[1]);
    ctx.strokeRect(x, y, f.x(c.upper[0]) - x, f.y(c.lower[1]) - y);
  }

  if (field("part-form", "edges").checked) {
    const centre = (c) => [f.x((c.lower[0] + c.upper[0]) / 2), f.y((c.lower[1] + c.upper[1]) / 2)];
    ctx.strokeStyle = "rgba(220,120,0,0.7)";
    ctx.beginPath();
    for (const [i, j] of view.edges) {
      const [ax, ay] = centre(view.cells[i]);
      const [bx, by] = centre(view.cells[j]);
      ctx.moveTo(ax, ay);
      ctx.lineTo(bx, by);
    }
    ctx.stroke();
  }
  const counts = view.cells.map((c) => c.count);
  status(
    "part-status",
    `${view.cells.length} cells, ${view.edges.length} edges, sizes ${Math.min(...counts)}–${Math.max(...counts)}, ${ms.toFixed(0)} ms`,
  );
}

let ensemble = null;
let curves = null;
let curvesX = 0.25;

function drawCurves(markX) {
  const canvas = $("ens-canvas");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const ys = curves.data.map((p) => p[1]).concat(curves.q05, curves.q95);
  const yr = [Math.min(...ys) - 0.2, Math.max(...ys) + 0.2];
  const f = frame(canvas, [0, 1], yr);
  axes(ctx, f, [0, 1], yr);

  ctx.fillStyle = "rgba(0,0,0,0.18)";
  for (const [a, b] of curves.data) ctx.fillRect(f.x(a) - 1, f.y(b) - 1, 2, 2);

  ctx.fillStyle = "rgba(40,120,220,0.15)";
  ctx.beginPath();
  curves.x.forEach((x, k) => (k ? ctx.lineTo : ctx.moveTo).call(ctx, f.x(x), f.y(curves.q95[k])));
  for (let k = curves.x.length - 1; k >= 0; k--) ctx.lineTo(f.x(curves.x[k]), f.y(curves.q05[k]));
  ctx.fill();

  const line = (vals, style, width) => {
    ctx.strokeStyle = style;
    ctx.lineWidth = width;
    ctx.beginPath();
    curves.x.forEach((x, k) => (k ? ctx.lineTo : ctx.moveTo).call(ctx, f.x(x), f.y(vals[k])));
    ctx.stroke();
  };
  for (const m of curves.members) line(m, "rgba(200,80,40,0.35)", 1);
  line(curves.median, "#114", 2);

  if (markX !== undefined) {
    ctx.strokeStyle = "#2a2";
    ctx.lineWidth = 1;
    ctx.beginPath();
    ctx.moveTo(f.x(markX), f.pad);
    ctx.lineTo(f.x(markX), f.pad + f.h);
    ctx.stroke();
  }
  return f;
}

function drawDensity(x) {
  const level = num("ens-form", "level");
  let p;
  try {
    p = JSON.parse(ensemble.predictive(x, level));
  } catch (e) {
    status("ens-status", String(e.message ?? e), true);
    return;
  }
  drawCurves(p.x);
  const canvas = $("dens-canvas");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const yr = [p.y[0], p.y[p.y.length - 1]];
  const top = Math.max(...p.density) * 1.1;
  const f = frame(canvas, yr, [0, top]);
  axes(ctx, f, yr, [0, top]);

  ctx.fillStyle = "rgba(40,160,60,0.25)";
  for (const [a, b] of p.hpd) ctx.fillRect(f.x(a), f.pad, f.x(b) - f.x(a), f.h);

  const gauss = (y, m, s) => Math.exp(-0.5 * ((y - m) / s) ** 2) / (s * Math.sqrt(2 * Math.PI));
  const k = p.members.length;
  ctx.strokeStyle = "rgba(200,80,40,0.35)";
  ctx.lineWidth = 1;
  for (const [m, s] of p.members) {
    ctx.beginPath();
    p.y.forEach((y, i) => (i ? ctx.lineTo : ctx.moveTo).call(ctx, f.x(y), f.y(gauss(y, m, s) / k)));
    ctx.stroke();
  }
  ctx.strokeStyle = "#114";
  ctx.lineWidth = 2;
  ctx.beginPath();
  p.y.forEach((y, i) => (i ? ctx.lineTo : ctx.moveTo).call(ctx, f.x(y), f.y(p.density[i])));
  ctx.stroke();

  const region = p.hpd.map(([a, b]) => `[${a.toFixed(2)}, ${b.toFixed(2)}]`).join(" ∪ ");
  status("ens-status", `x = ${p.x.toFixed(3)}: ${p.modes} mode(s), ${Math.round(100 * p.level)}% HPD ${region}`);
}

function train() {
  const n = num("ens-form", "n");
  const members = num("ens-form", "members");
  const eta = num("ens-form", "eta");
  const seed = BigInt(num("ens-form", "seed"));
  status("ens-status", "training…");
  // let the status repaint before the synchronous fit
  setTimeout(() => {
    try {
      if (ensemble) ensemble.free();
      let ms;
      [ensemble, ms] = timed(() => new Ensemble1d(n, members, eta, seed));
      curves = JSON.parse(ensemble.curves(200));
      drawDensity(curvesX);
      $("ens-status").textContent += ` (trained ${ensemble.size} members in ${ms.toFixed(0)} ms; click the plot to move x)`;
    } catch (e) {
      ensemble = null;
      status("ens-status", String(e.message ?? e), true);
    }
  }, 10);
}

await init();
$("part-run").addEventListener("click", drawPartition);
$("ens-run").addEventListener("click", train);
$("ens-form").querySelector("[name=level]").addEventListener("change", () => ensemble && drawDensity(curvesX));
$("ens-canvas").addEventListener("click", (ev) => {
  if (!ensemble) return;
  const canvas = $("ens-canvas");
  const r = canvas.getBoundingClientRect();
  const f = frame(canvas, [0, 1], [0, 1]);
  curvesX = Math.min(1, Math.max(0, f.inv((ev.clientX - r.left) * (canvas.width / r.width))));
  drawDensity(curvesX);
});
drawPartition();
train();
