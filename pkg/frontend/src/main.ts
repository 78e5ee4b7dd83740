// DOM wiring for the human-as-oracle game page.

import { GameApi } from "./api.js";
import { ClientGame } from "./state.js";
import { boxToCanvas, canvasToScene, drawScene, hitTest, renderBeliefBars } from "./render.js";

const api = new GameApi("");

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const newGameBtn = el<HTMLButtonElement>("new-game");
const askBtn = el<HTMLButtonElement>("ask");
const guessBtn = el<HTMLButtonElement>("guess");
const answerButtons = Array.from(
  document.querySelectorAll<HTMLButtonElement>("button[data-answer]"),
);
const canvas = el<HTMLCanvasElement>("scene");
const questionEl = el<HTMLDivElement>("question");
const statusEl = el<HTMLDivElement>("status");
const logEl = el<HTMLUListElement>("log");
const barsEl = el<HTMLDivElement>("bars");
const seedInput = el<HTMLInputElement>("seed");

let game: ClientGame | null = null;

function setStatus(text: string): void {
  statusEl.textContent = text;
}

function refresh(): void {
  if (!game) return;
  game.checkInvariants();
  drawScene(canvas, game.objects, game.secretTarget, game.guessIndex);
  renderBeliefBars(
    barsEl,
    game.objects,
    game.belief,
    game.beliefDeltas(),
    (i) => game!.beliefSeries(i),
  );
  logEl.replaceChildren(
    ...game.questionLog.map((entry, i) => {
      const item = document.createElement("li");
      item.textContent = `Q${i + 1}: ${entry.question} — ${entry.answer ?? "…"}`;
      return item;
    }),
  );
  askBtn.disabled = game.phase !== "ready_to_ask";
  guessBtn.disabled = game.phase !== "ready_to_ask" && game.phase !== "ready_to_guess";
  for (const btn of answerButtons) {
    btn.disabled = game.phase !== "awaiting_answer";
  }
}

newGameBtn.addEventListener("click", async () => {
  const seedText = seedInput.value.trim();
  const options = seedText === "" ? {} : { seed: Number(seedText) };
  game = await ClientGame.start(api, options);
  questionEl.textContent = "";
  setStatus("Click your secret object in the scene, then ask away.");
  refresh();
});

canvas.addEventListener("click", (event) => {
  if (!game) return;
  const rect = canvas.getBoundingClientRect();
  const px = ((event.clientX - rect.left) / rect.width) * canvas.width;
  const py = ((event.clientY - rect.top) / rect.height) * canvas.height;
  const [sx, sy] = canvasToScene(px, py, canvas.width);
  const hit = hitTest(game.objects, sx, sy);
  if (hit === null) return;
  try {
    game.selectTarget(hit);
    setStatus(`Secret object ${hit} locked in. The agent cannot see this.`);
  } catch (err) {
    setStatus(String(err instanceof Error ? err.message : err));
  }
  refresh();
});

askBtn.addEventListener("click", async () => {
  if (!game) return;
  try {
    const entry = await game.askQuestion();
    questionEl.textContent = entry.question;
    setStatus("Answer honestly for your secret object.");
  } catch (err) {
    setStatus(String(err instanceof Error ? err.message : err));
  }
  refresh();
});

for (const btn of answerButtons) {
  btn.addEventListener("click", async () => {
    if (!game) return;
    const answer = btn.dataset.answer as "yes" | "no" | "na";
    try {
      await game.answer(answer);
      setStatus(
        game.phase === "ready_to_guess"
          ? "Question budget spent — time for the agent to guess."
          : "Belief updated.",
      );
    } catch (err) {
      setStatus(String(err instanceof Error ? err.message : err));
    }
    refresh();
  });
}

guessBtn.addEventListener("click", async () => {
  if (!game) return;
  try {
    const guess = await game.guess();
    const obj = game.objects[guess];
    setStatus(
      game.success
        ? `The agent guessed object ${guess} (${obj.color} ${obj.category}) — correct!`
        : `The agent guessed object ${guess} (${obj.color} ${obj.category}) — ` +
            `your object was ${game.secretTarget}. You win this one.`,
    );
  } catch (err) {
    setStatus(String(err instanceof Error ? err.message : err));
  }
  refresh();
});

export { boxToCanvas }; // keeps the module shape stable for tests
