// Client-side game state.
//
// Invariants enforced here:
//  - the secret target index exists only in this object, never in requests;
//  - the belief history always holds answered-round-count + 1 entries,
//    copied verbatim from API payloads (no client-side renormalization);
//  - every transition is gated by the mirrored session status, so a correct
//    client never triggers a 409.

import { GameApi } from "./api.js";
import type { Answer, SceneObject, SessionPayload, SessionStatus } from "./types.js";

export type Phase =
  | "picking_target" // scene shown, human must click the secret object
  | "ready_to_ask"
  | "awaiting_answer"
  | "ready_to_guess"
  | "revealed";

export interface QuestionLogEntry {
  question: string;
  tokens: number[];
  answer: Answer | null;
}

export class ClientGame {
  readonly sessionId: string;
  readonly objects: SceneObject[];
  readonly maxQuestions: number;
  beliefHistory: number[][];
  questionLog: QuestionLogEntry[] = [];
  statusMirror: SessionStatus;
  phase: Phase = "picking_target";
  secretTarget: number | null = null; // client-only, by design
  guessIndex: number | null = null;
  success: boolean | null = null;

  constructor(
    private readonly api: GameApi,
    session: SessionPayload,
  ) {
    this.sessionId = session.session_id;
    this.objects = session.objects;
    this.maxQuestions = session.max_questions;
    this.beliefHistory = [session.belief.slice()];
    this.statusMirror = session.status;
  }

  static async start(api: GameApi, options: Parameters<GameApi["createGame"]>[0] = {}) {
    const session = await api.createGame(options);
    return new ClientGame(api, session);
  }

  get belief(): number[] {
    return this.beliefHistory[this.beliefHistory.length - 1];
  }

  get answeredRounds(): number {
    return this.questionLog.filter((entry) => entry.answer !== null).length;
  }

  /** Belief series for one object across rounds (sparkline data). */
  beliefSeries(objectIndex: number): number[] {
    return this.beliefHistory.map((belief) => belief[objectIndex]);
  }

  /** Round-over-round belief change for every object. */
  beliefDeltas(): number[] {
    const count = this.beliefHistory.length;
    if (count < 2) {
      return this.belief.map(() => 0);
    }
    const prev = this.beliefHistory[count - 2];
    return this.belief.map((value, i) => value - prev[i]);
  }

  selectTarget(index: number): void {
    if (this.phase !== "picking_target") {
      throw new Error("the secret target is locked once the first round starts");
    }
    if (index < 0 || index >= this.objects.length) {
      throw new Error(`no object ${index} in this scene`);
    }
    this.secretTarget = index;
    this.phase = "ready_to_ask";
  }

  async askQuestion(): Promise<QuestionLogEntry> {
    if (this.phase !== "ready_to_ask") {
      throw new Error(`cannot ask a question in phase ${this.phase}`);
    }
    if (this.statusMirror !== "awaiting_question") {
      throw new Error(`server status is ${this.statusMirror}`);
    }
    const payload = await this.api.getQuestion(this.sessionId);
    const entry: QuestionLogEntry = {
      question: payload.question,
      tokens: payload.question_tokens,
      answer: null,
    };
    this.questionLog.push(entry);
    this.statusMirror = "awaiting_answer";
    this.phase = "awaiting_answer";
    return entry;
  }

  async answer(answer: Answer): Promise<number[]> {
    if (this.phase !== "awaiting_answer") {
      throw new Error(`cannot answer in phase ${this.phase}`);
    }
    const response = await this.api.postAnswer(this.sessionId, answer);
    this.questionLog[this.questionLog.length - 1].answer = answer;
    this.beliefHistory.push(response.belief.slice()); // verbatim API values
    this.statusMirror = response.status;
    this.phase =
      this.answeredRounds >= this.maxQuestions ? "ready_to_guess" : "ready_to_ask";
    return response.belief;
  }

  async guess(): Promise<number> {
    if (this.phase !== "ready_to_ask" && this.phase !== "ready_to_guess") {
      throw new Error(`cannot guess in phase ${this.phase}`);
    }
    const response = await this.api.postGuess(this.sessionId);
    this.guessIndex = response.guess_index;
    this.statusMirror = response.status;
    if (this.secretTarget === null) {
      throw new Error("no secret target selected");
    }
    this.success = response.guess_index === this.secretTarget;
    this.phase = "revealed";
    // only now, after the reveal, may the outcome leave the client
    await this.api.postResult(this.sessionId, this.success);
    this.statusMirror = "done";
    return response.guess_index;
  }

  checkInvariants(): void {
    if (this.beliefHistory.length !== this.answeredRounds + 1) {
      throw new Error(
        `belief history has ${this.beliefHistory.length} entries for ` +
          `${this.answeredRounds} answered rounds`,
      );
    }
  }
}
