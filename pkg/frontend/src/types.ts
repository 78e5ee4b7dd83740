// Payload shapes of the game service API.

export type Answer = "yes" | "no" | "na";

export type SessionStatus =
  | "awaiting_question"
  | "awaiting_answer"
  | "guessed"
  | "done";

export interface SceneObject {
  index: number;
  category: string;
  color: string;
  quadrant: string;
  size: string;
  box: [number, number, number, number]; // x_min, y_min, x_max, y_max in [-1, 1]
}

export interface RoundPayload {
  question: string;
  question_tokens: number[];
  answer: Answer;
}

export interface SessionPayload {
  session_id: string;
  status: SessionStatus;
  objects: SceneObject[];
  n_real: number;
  max_questions: number;
  rounds_played: number;
  decode: string;
  belief: number[];
  belief_history: number[][];
  rounds: RoundPayload[];
  pending_question: { question: string; question_tokens: number[] } | null;
  guess_index: number | null;
  success: boolean | null;
}

export interface QuestionPayload {
  question: string;
  question_tokens: number[];
  round: number;
  belief: number[];
}

export interface AnswerResponse {
  belief: number[];
  rounds_played: number;
  status: SessionStatus;
}

export interface GuessResponse {
  guess_index: number;
  belief: number[];
  status: SessionStatus;
}
