import init, { encode_delta, decode_action, mask_grid, ToyDemo } from "./pkg/lap_web.js";

const $ = (id) => document.getElementById(id);

function show(el, fn) {
  try {
    el.textContent = fn();
    el.classList.remove("err");
  } catch (e) {
    el.textContent = String(e.message ?? e);
    el.classList.add("err");
  }
}

function drawPaths(demo) {
  const canvas = $("paths");
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const scale = w / 6;
  const px = (v) => w / 2 + v[0] * scale;
  const py = (v) => h / 2 - v[1] * scale;
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#ddd";
  ctx.beginPath();
  ctx.moveTo(0, h / 2); ctx.lineTo(w, h / 2);
  ctx.moveTo(w / 2, 0); ctx.lineTo(w / 2, h);
  ctx.stroke();
  for (const [s, color] of [[1, "#1f5fbf"], [-1, "#bf1f1f"]]) {
    const paths = JSON.parse(demo.paths(s, true, 24, 10));
    ctx.strokeStyle = color;
    for (const path of paths) {
      ctx.beginPath();
      path.forEach((v, i) => (i ? ctx.lineTo(px(v), py(v)) : ctx.moveTo(px(v), py(v))));
      ctx.stroke();
      const end = path[path.length - 1];
      ctx.fillStyle = color;
      ctx.fillRect(px(end) - 2, py(end) - 2, 4, 4);
    }
  }
}

await init();

$("encode").onclick = () => show($("codec-out"), () => encode_delta($("delta").value));
$("decode").onclick = () => show($("codec-out"), () => decode_action($("text").value, $("frame").value));

const updateMask = () =>
  show($("mask"), () => mask_grid(+$("n-prefix").value, +$("n-lang").value, +$("n-act").value));
for (const id of ["n-prefix", "n-lang", "n-act"]) $(id).oninput = updateMask;
updateMask();

$("train").onclick = () => {
  $("toy-out").textContent = "training...";
  setTimeout(() => {
    show($("toy-out"), () => {
      const demo = new ToyDemo(+$("toy-steps").value, +$("toy-lambda").value, BigInt($("toy-seed").value));
      drawPaths(demo);
      const lines = demo.metrics().trim().split("\n");
      demo.free();
      return lines.slice(-3).join("\n");
    });
  }, 0);
};
