import init, { Demo } from "./pkg/latticeprop_demo.js";

const canvas = document.getElementById("view");
const ctx = canvas.getContext("2d");
const status = document.getElementById("status");
const stepsInput = document.getElementById("steps");
let demo = null;
let scale = 2;

const palette = [
  [230, 25, 75], [60, 180, 75], [255, 225, 25], [0, 130, 200],
  [245, 130, 48], [145, 30, 180], [70, 240, 240], [240, 50, 230],
];

function drawCells(colorOf) {
  const rows = demo.rows(), cols = demo.cols(), d = demo.factor() * scale;
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      const [R, G, B] = colorOf(r * cols + c);
      ctx.fillStyle = `rgb(${R},${G},${B})`;
      ctx.fillRect(c * d, r * d, d, d);
    }
  }
}

function drawBoxes(corners, color) {
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  for (let i = 0; i + 8 <= corners.length; i += 8) {
    ctx.beginPath();
    ctx.moveTo(corners[i] * scale, corners[i + 1] * scale);
    for (let k = 2; k < 8; k += 2) ctx.lineTo(corners[i + k] * scale, corners[i + k + 1] * scale);
    ctx.closePath();
    ctx.stroke();
  }
}

function drawVectors() {
  const v = demo.vectors(), fg = demo.foreground();
  const cols = demo.cols(), d = demo.factor() * scale;
  ctx.strokeStyle = "#0ff";
  ctx.lineWidth = 1;
  for (let i = 0; i < fg.length; i++) {
    if (!fg[i]) continue;
    const x = (i % cols + 0.5) * d, y = (Math.floor(i / cols) + 0.5) * d;
    ctx.beginPath();
    ctx.moveTo(x, y);
    ctx.lineTo(x + v[2 * i] * d * 0.45, y + v[2 * i + 1] * d * 0.45);
    ctx.stroke();
  }
}

function showHeatmap() {
  const steps = Number(stepsInput.value);
  document.getElementById("steps-label").textContent = steps;
  const h = demo.heatmap(steps);
  drawCells((i) => [h[i], h[i], h[i]]);
  if (document.getElementById("arrows").checked) drawVectors();
  drawBoxes(demo.ground_truth(), "#f80");
  status.textContent = `step ${steps}: brightness = confidence held by the labelled centres`;
}

function detect(algo) {
  const t = performance.now();
  const det = demo.detect(algo);
  const ms = performance.now() - t;
  const clusters = det.clusters();
  const ids = new Map();
  drawCells((i) => {
    const c = clusters[i];
    if (c < 0) return [0, 0, 0];
    if (!ids.has(c)) ids.set(c, ids.size);
    return palette[ids.get(c) % palette.length];
  });
  drawBoxes(demo.ground_truth(), "#fff");
  drawBoxes(det.corners(), "#000");
  status.textContent =
    `${algo}: ${ids.size} clusters, P ${det.precision.toFixed(2)} R ${det.recall.toFixed(2)} ` +
    `F ${det.f_score.toFixed(2)} in ${ms.toFixed(1)} ms`;
  det.free();
}

function generate() {
  if (demo) demo.free();
  try {
    demo = new Demo(
      BigInt(document.getElementById("seed").value),
      Number(document.getElementById("boxes").value),
      Number(document.getElementById("noise").value),
    );
  } catch (e) {
    status.textContent = `error: ${e}`;
    demo = null;
    return;
  }
  scale = canvas.width / (demo.cols() * demo.factor());
  stepsInput.max = demo.rows() + demo.cols();
  showHeatmap();
}

await init();
document.getElementById("generate").addEventListener("click", generate);
stepsInput.addEventListener("input", showHeatmap);
document.getElementById("arrows").addEventListener("change", showHeatmap);
for (const b of document.querySelectorAll("button[data-algo]")) {
  b.addEventListener("click", () => {
    if (!demo) return;
    try { detect(b.dataset.algo); } catch (e) { status.textContent = `error: ${e}`; }
  });
}
generate();
