import init, { action_profile_js, classify_ridge_js, two_ridge_sweep_js } from "./pkg/orbits_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);

function plot(canvas, series, mark) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const xs = series.flatMap((s) => s.x), ys = series.flatMap((s) => s.y);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  if (y1 - y0 < 1e-12) { y0 -= 1; y1 += 1; }
  const px = (x) => 40 + ((x - x0) / (x1 - x0 || 1)) * (w - 60);
  const py = (y) => h - 25 - ((y - y0) / (y1 - y0)) * (h - 45);
  ctx.fillStyle = "#444";
  ctx.fillText(y1.toPrecision(8), 2, 12);
  ctx.fillText(y0.toPrecision(8), 2, h - 28);
  ctx.fillText(x0.toFixed(3), 40, h - 8);
  ctx.fillText(x1.toFixed(3), w - 60, h - 8);
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.x.forEach((x, i) => (i ? ctx.lineTo(px(x), py(s.y[i])) : ctx.moveTo(px(x), py(s.y[i]))));
    ctx.stroke();
  }
  for (const m of mark ?? []) {
    ctx.strokeStyle = "#c00";
    ctx.beginPath();
    ctx.moveTo(px(m), 10);
    ctx.lineTo(px(m), h - 25);
    ctx.stroke();
  }
}

function guard(out, f) {
  try {
    f();
  } catch (e) {
    out.textContent = "error: " + e;
  }
}

await init();

$("p-run").onclick = () =>
  guard($("p-out"), () => {
    const r = JSON.parse(action_profile_js($("model").value, num("p-energy"), num("p-points")));
    plot($("p-canvas"), [{ x: r.x, y: r.F, color: "#06c" }]);
  });

$("c-run").onclick = () =>
  guard($("c-out"), () => {
    const r = JSON.parse(classify_ridge_js(num("c-eps"), num("c-energy")));
    $("c-out").textContent = JSON.stringify(r, null, 2);
  });

$("s-run").onclick = () =>
  guard($("s-out"), () => {
    const r = JSON.parse(two_ridge_sweep_js(num("s-lo"), num("s-hi"), num("s-de")));
    const colors = ["#06c", "#090", "#a50", "#888"];
    // actions grow like √E; plot the difference from the lowest branch to make the exchange visible
    const base = new Map(r.summary.map((row) => [row.energy, row.min_action]));
    plot(
      $("s-canvas"),
      r.branches.map((b, i) => ({
        x: b.E,
        y: b.F.map((f, k) => f - (base.get(b.E[k]) ?? f)),
        color: colors[i % colors.length],
      })),
      r.crossings.map((c) => c.e_star),
    );
    $("s-out").textContent = JSON.stringify(r.crossings, null, 2);
  });
