// ============================================================
// App entry
//
// Wires the REST client, the layout view model, and the renderers
// to the page.  All protocol semantics stay on the service side:
// this file only moves JSON between endpoints and the screen.
//
// Mutations are serialized client side: while one request is in
// flight every other mutating control is a no-op, and a 409 from
// the service triggers a snapshot refresh instead of a retry.
// ============================================================

import {
  ApiClient,
  ApiRequestError,
  type ProtocolInfo,
  type SessionSnapshot,
  type StageDetail,
  type VerifyResponse,
} from "./api.js";
import {
  layoutDiagrams,
  placeSessionNodes,
  type DiagramSet,
} from "./viewmodel.js";
import {
  renderChips,
  renderDiagrams,
  renderStagePanel,
  renderWarnings,
  toast,
} from "./render.js";

interface AppState {
  client: ApiClient;
  protocols: ProtocolInfo[];
  verification: VerifyResponse | null;
  diagrams: DiagramSet | null;
  snapshot: SessionSnapshot | null;
  // false after importing a recorded session: render-only, no mutations
  live: boolean;
  busy: boolean;
  playTimer: ReturnType<typeof setInterval> | null;
  selectedChips: string[];
  selectedStageId: string | null;
}

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) {
    throw new Error(`missing element #${id}`);
  }
  return el as T;
}

export async function boot(baseUrl = ""): Promise<AppState> {
  const state: AppState = {
    client: new ApiClient(baseUrl),
    protocols: [],
    verification: null,
    diagrams: null,
    snapshot: null,
    live: false,
    busy: false,
    playTimer: null,
    selectedChips: [],
    selectedStageId: null,
  };

  const protocolSelect = byId<HTMLSelectElement>("protocol-select");
  const verifyBtn = byId<HTMLButtonElement>("verify-btn");
  const verifyOutcome = byId<HTMLElement>("verify-outcome");
  const replayBtn = byId<HTMLButtonElement>("replay-btn");
  const diagramSvg = document.getElementById("diagram") as SVGSVGElement | null;
  if (diagramSvg === null) {
    throw new Error("missing element #diagram");
  }
  const layoutWarnings = byId<HTMLElement>("layout-warnings");
  const detailPanel = byId<HTMLElement>("detail");
  const configInput = byId<HTMLInputElement>("config-input");
  const seedInput = byId<HTMLInputElement>("seed-input");
  const startBtn = byId<HTMLButtonElement>("start-session-btn");
  const sessionMeta = byId<HTMLElement>("session-meta");
  const sessionWarnings = byId<HTMLElement>("session-warnings");
  const playBtn = byId<HTMLButtonElement>("play-btn");
  const cadenceSlider = byId<HTMLInputElement>("cadence-slider");
  const cadenceValue = byId<HTMLElement>("cadence-value");
  const progressBtn = byId<HTMLButtonElement>("progress-btn");
  const progressValue = byId<HTMLElement>("progress-value");
  const prevBtn = byId<HTMLButtonElement>("prev-btn");
  const nextBtn = byId<HTMLButtonElement>("next-btn");
  const exportBtn = byId<HTMLButtonElement>("export-btn");
  const importInput = byId<HTMLInputElement>("import-input");
  const chipsHost = byId<HTMLElement>("chips");
  const toastsHost = byId<HTMLElement>("toasts");

  const say = (message: string) => toast(toastsHost, message);

  // --------------------------------------------------------
  // Rendering
  // --------------------------------------------------------

  const onStageClick = (outputValue: number, stageId: string): void => {
    state.selectedStageId = stageId;
    redraw();
    void showStageDetail(outputValue, stageId);
  };

  function redraw(): void {
    if (state.diagrams === null) {
      diagramSvg!.replaceChildren();
      renderChips(chipsHost, {}, [], () => undefined);
      syncButtons();
      return;
    }
    const placed =
      state.snapshot === null ? [] : placeSessionNodes(state.snapshot, state.diagrams);
    const edges = state.snapshot === null ? [] : state.snapshot.edges;
    renderDiagrams(diagramSvg!, state.diagrams, placed, edges, state.selectedStageId, {
      onStageClick,
    });
    if (state.snapshot !== null) {
      renderChips(chipsHost, state.snapshot.current.counts, state.selectedChips, onChipPick);
    } else {
      renderChips(chipsHost, {}, [], () => undefined);
    }
    syncButtons();
  }

  function syncButtons(): void {
    const snap = state.snapshot;
    const haveLive = snap !== null && state.live;
    prevBtn.disabled = !haveLive || snap.cursor <= 0;
    nextBtn.disabled = !haveLive || snap.cursor >= snap.run.length - 1;
    progressBtn.disabled = !haveLive;
    playBtn.disabled = !haveLive;
    exportBtn.disabled = snap === null;
    const verified = state.verification !== null;
    startBtn.disabled = !verified;
    replayBtn.disabled =
      state.verification === null ||
      state.verification.outcome !== "refuted" ||
      state.verification.run === null;
    if (snap !== null) {
      sessionMeta.textContent = `session ${snap.id} · seed ${snap.seed} · step ${snap.cursor + 1}/${snap.run.length}${state.live ? "" : " · imported (read-only)"}`;
    } else {
      sessionMeta.textContent = "";
    }
  }

  async function updateProgressValue(): Promise<void> {
    const snap = state.snapshot;
    let label = "–";
    if (snap !== null && state.verification !== null) {
      const current = snap.current;
      for (let gi = 0; gi < current.placements.length; gi++) {
        const stageId = current.placements[gi];
        if (stageId === undefined || stageId === null) {
          continue;
        }
        const graph = state.verification.graphs[gi];
        const stage = graph?.stages.find((s) => s.id === stageId);
        if (stage === undefined || stage.certificate === null) {
          break; // placed, but nothing to measure here
        }
        try {
          const detail = await state.client.stageDetail(snap.protocol_id, stageId, current.counts);
          if (detail.certificate_value !== null) {
            label = String(detail.certificate_value);
          }
        } catch {
          // leave the dash; the panel click path will surface errors
        }
        break;
      }
    }
    progressValue.textContent = label;
  }

  async function applySnapshot(snap: SessionSnapshot, live: boolean): Promise<void> {
    state.snapshot = snap;
    state.live = live;
    state.selectedChips = [];
    redraw();
    renderWarnings(sessionWarnings, snap.warnings);
    await updateProgressValue();
  }

  async function showStageDetail(outputValue: number, stageId: string): Promise<void> {
    const verification = state.verification;
    if (verification === null) {
      return;
    }
    try {
      const config = state.snapshot?.current.counts;
      const detail: StageDetail = await state.client.stageDetail(
        verification.protocol_id,
        stageId,
        config,
      );
      renderStagePanel(detailPanel, detail);
    } catch (err) {
      say(err instanceof Error ? err.message : String(err));
    }
  }

  // --------------------------------------------------------
  // Mutations (single in-flight request, 409 refreshes)
  // --------------------------------------------------------

  async function mutate(fn: () => Promise<void>): Promise<void> {
    if (state.busy) {
      return;
    }
    state.busy = true;
    try {
      await fn();
    } catch (err) {
      if (err instanceof ApiRequestError && err.status === 409 && state.snapshot !== null) {
        try {
          const fresh = await state.client.getSession(state.snapshot.id);
          await applySnapshot(fresh, state.live);
          say("session was out of date; refreshed");
        } catch {
          say("session conflict and the refresh failed");
        }
      } else if (err instanceof Error) {
        say(err.message);
      } else {
        say(String(err));
      }
    } finally {
      state.busy = false;
    }
  }

  function requireLiveSession(): SessionSnapshot | null {
    if (state.snapshot === null) {
      say("start a session first");
      return null;
    }
    if (!state.live) {
      say("imported sessions are read-only");
      return null;
    }
    return state.snapshot;
  }

  // --------------------------------------------------------
  // Handlers
  // --------------------------------------------------------

  async function loadProtocols(): Promise<void> {
    const listing = await state.client.listProtocols();
    state.protocols = listing.protocols;
    protocolSelect.replaceChildren();
    for (const protocol of state.protocols) {
      const option = document.createElement("option");
      option.value = protocol.id;
      option.textContent = protocol.name;
      protocolSelect.append(option);
    }
  }

  verifyBtn.addEventListener("click", () => {
    void mutate(async () => {
      const protocolId = protocolSelect.value;
      if (protocolId === "") {
        say("no protocol selected");
        return;
      }
      verifyOutcome.textContent = "verifying…";
      const result = await state.client.verify(protocolId);
      state.verification = result;
      state.diagrams = layoutDiagrams(result.graphs);
      state.snapshot = null;
      state.live = false;
      state.selectedStageId = null;
      stopPlaying();
      verifyOutcome.textContent = result.outcome;
      verifyOutcome.dataset["outcome"] = result.outcome;
      renderStagePanel(detailPanel, null);
      renderWarnings(
        layoutWarnings,
        state.diagrams.layouts.flatMap((l) => l.warnings),
      );
      renderWarnings(sessionWarnings, []);
      redraw();
      await updateProgressValue();
    });
  });

  protocolSelect.addEventListener("change", () => {
    state.verification = null;
    state.diagrams = null;
    state.snapshot = null;
    state.live = false;
    state.selectedStageId = null;
    stopPlaying();
    verifyOutcome.textContent = "";
    renderStagePanel(detailPanel, null);
    renderWarnings(layoutWarnings, []);
    renderWarnings(sessionWarnings, []);
    redraw();
  });

  startBtn.addEventListener("click", () => {
    void mutate(async () => {
      const verification = state.verification;
      if (verification === null) {
        say("verify a protocol first");
        return;
      }
      let config: Record<string, number>;
      try {
        config = JSON.parse(configInput.value) as Record<string, number>;
      } catch {
        say("start configuration must be a JSON object of state counts");
        return;
      }
      const body: { protocol_id: string; config: Record<string, number>; seed?: number } = {
        protocol_id: verification.protocol_id,
        config,
      };
      if (seedInput.value.trim() !== "") {
        body.seed = Number(seedInput.value);
      }
      const snap = await state.client.createSession(body);
      await applySnapshot(snap, true);
    });
  });

  function onChipPick(chipKey: string): void {
    if (state.snapshot === null || !state.live) {
      return;
    }
    const at = state.selectedChips.indexOf(chipKey);
    if (at >= 0) {
      state.selectedChips.splice(at, 1);
      redraw();
      return;
    }
    state.selectedChips.push(chipKey);
    if (state.selectedChips.length < 2) {
      redraw();
      return;
    }
    const pair = state.selectedChips.map((key) => key.split("#")[0] ?? "") as [string, string];
    state.selectedChips = [];
    void mutate(async () => {
      const snap = requireLiveSession();
      if (snap === null) {
        return;
      }
      const next = await state.client.step(snap.id, {
        mode: "manual",
        pair,
        expected_run_length: snap.run_length,
      });
      await applySnapshot(next, true);
    });
  }

  progressBtn.addEventListener("click", () => {
    void mutate(async () => {
      const snap = requireLiveSession();
      if (snap === null) {
        return;
      }
      const next = await state.client.step(snap.id, {
        mode: "progress",
        expected_run_length: snap.run_length,
      });
      await applySnapshot(next, true);
    });
  });

  prevBtn.addEventListener("click", () => {
    void mutate(async () => {
      const snap = requireLiveSession();
      if (snap === null || snap.cursor <= 0) {
        return;
      }
      const next = await state.client.seek(snap.id, snap.cursor - 1, snap.run_length);
      await applySnapshot(next, true);
    });
  });

  nextBtn.addEventListener("click", () => {
    void mutate(async () => {
      const snap = requireLiveSession();
      if (snap === null || snap.cursor >= snap.run.length - 1) {
        return;
      }
      const next = await state.client.seek(snap.id, snap.cursor + 1, snap.run_length);
      await applySnapshot(next, true);
    });
  });

  function stopPlaying(): void {
    if (state.playTimer !== null) {
      clearInterval(state.playTimer);
      state.playTimer = null;
    }
    playBtn.textContent = "PLAY";
  }

  playBtn.addEventListener("click", () => {
    if (state.playTimer !== null) {
      stopPlaying();
      return;
    }
    if (requireLiveSession() === null) {
      return;
    }
    playBtn.textContent = "PAUSE";
    state.playTimer = setInterval(() => {
      if (state.busy) {
        return; // keep mutations single file
      }
      const snap = state.snapshot;
      if (snap === null || !state.live) {
        stopPlaying();
        return;
      }
      void mutate(async () => {
        const next = await state.client.step(snap.id, {
          mode: "random",
          repeat: cadenceSlider.valueAsNumber,
          expected_run_length: snap.run_length,
        });
        await applySnapshot(next, true);
      });
    }, 500);
  });

  cadenceSlider.addEventListener("input", () => {
    cadenceValue.textContent = `×${cadenceSlider.value}`;
  });

  exportBtn.addEventListener("click", () => {
    const snap = state.snapshot;
    if (snap === null) {
      return;
    }
    try {
      const anchor = document.createElement("a");
      anchor.href = `data:application/json;charset=utf-8,${encodeURIComponent(JSON.stringify(snap, null, 2))}`;
      anchor.download = `${snap.id}.json`;
      anchor.click();
    } catch (err) {
      say(err instanceof Error ? err.message : String(err));
    }
  });

  importInput.addEventListener("change", () => {
    const file = importInput.files?.[0];
    if (file === undefined) {
      return;
    }
    void file
      .text()
      .then(async (text) => {
        const snap = JSON.parse(text) as SessionSnapshot;
        if (!Array.isArray(snap.nodes) || !Array.isArray(snap.run)) {
          throw new Error("not a session snapshot");
        }
        stopPlaying();
        await applySnapshot(snap, false);
        say("imported session is read-only");
      })
      .catch((err: unknown) => {
        say(err instanceof Error ? err.message : String(err));
      })
      .finally(() => {
        importInput.value = "";
      });
  });

  replayBtn.addEventListener("click", () => {
    void mutate(async () => {
      const verification = state.verification;
      if (verification === null || verification.run === null || verification.run.length === 0) {
        return;
      }
      const protocol = state.protocols.find((p) => p.id === verification.protocol_id);
      if (protocol === undefined) {
        say("protocol details are missing; reload the page");
        return;
      }
      const first = verification.run[0];
      if (first === undefined) {
        return;
      }
      stopPlaying();
      let snap = await state.client.createSession({
        protocol_id: verification.protocol_id,
        config: first.config,
        seed: 0,
      });
      for (const entry of verification.run) {
        if (entry.transition === null) {
          continue;
        }
        const transition = protocol.transitions.find((t) => t.name === entry.transition);
        if (transition === undefined || transition.pre.length !== 2) {
          say(`cannot replay transition ${entry.transition}`);
          break;
        }
        snap = await state.client.step(snap.id, {
          mode: "manual",
          pair: [transition.pre[0]!, transition.pre[1]!],
          expected_run_length: snap.run_length,
        });
      }
      await applySnapshot(snap, true);
    });
  });

  // --------------------------------------------------------
  // Boot
  // --------------------------------------------------------

  cadenceValue.textContent = `×${cadenceSlider.value}`;
  renderStagePanel(detailPanel, null);
  redraw();
  try {
    await loadProtocols();
  } catch (err) {
    say(err instanceof Error ? err.message : String(err));
  }
  return state;
}
