import { ApiClient, ApiRequestError } from "./api.js";
import { renderLineChart } from "./charts.js";
import { downloadCsv, scenariosToCsv } from "./export.js";
import { MAX_SCENARIOS, ScenarioStore, mean } from "./scenarios.js";
import type { RecommendRequest, RouteSummary, ServiceMeta } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

function svgEl(id: string): SVGSVGElement {
  const node = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  node.setAttribute("id", id);
  node.setAttribute("class", "chart");
  return node;
}

export interface App {
  store: ScenarioStore;
  loadCatalog(): Promise<void>;
  selectRoute(routeId: string): Promise<void>;
  runScenario(): Promise<void>;
  exportCsv(): string;
  meta: ServiceMeta | null;
  root: HTMLElement;
}

/** Build the what-if explorer inside `root`, talking only to the HTTP API. */
export function createApp(root: HTMLElement, client: ApiClient): App {
  const store = new ScenarioStore();
  let meta: ServiceMeta | null = null;
  let routes: RouteSummary[] = [];

  root.innerHTML = "";
  const banner = el("div", { class: "banner", hidden: "" });
  banner.append(
    el("span", { class: "banner-text" }, "Could not reach the recommendation service."),
    el("button", { id: "retry-btn" }, "Retry"),
  );

  const userSelect = el("select", { id: "user-select" });
  const routeSelect = el("select", { id: "route-select" });
  const sportSelect = el("select", { id: "sport-select" });
  const slider = el("input", { id: "calorie-slider", type: "range", min: "0", max: "1000", step: "1" });
  const calorieInput = el("input", { id: "calorie-input", type: "number", value: "500" });
  const warning = el("span", { id: "calorie-warning", class: "badge", hidden: "" }, "outside training range");
  const fieldError = el("span", { id: "field-error", class: "error", hidden: "" });
  const runBtn = el("button", { id: "run-btn" }, "Run scenario");
  const exportBtn = el("button", { id: "export-btn", disabled: "" }, "Export CSV");
  const clearBtn = el("button", { id: "clear-btn" }, "Clear");

  const altitudeChart = svgEl("altitude-chart");
  const speedChart = svgEl("speed-chart");
  const hrChart = svgEl("hr-chart");
  const cards = el("div", { id: "cards" });

  const controls = el("div", { class: "controls" });
  controls.append(
    el("label", {}, "User "), userSelect,
    el("label", {}, " Route "), routeSelect,
    el("label", {}, " Sport "), sportSelect,
    el("label", {}, " Calories "), slider, calorieInput, warning,
    runBtn, exportBtn, clearBtn, fieldError,
  );

  root.append(
    banner,
    controls,
    el("h3", {}, "Route altitude"), altitudeChart,
    el("h3", {}, "Speed (km/h)"), speedChart,
    el("h3", {}, "Heart rate (bpm)"), hrChart,
    cards,
  );

  function currentCalories(): number {
    return Number(calorieInput.value);
  }

  function syncCalorieWidgets(value: number): void {
    calorieInput.value = String(value);
    slider.value = String(value);
    if (meta) {
      const [lo, hi] = meta.calorie_range;
      warning.hidden = value >= lo && value <= hi;
    }
  }

  slider.addEventListener("input", () => syncCalorieWidgets(Number(slider.value)));
  calorieInput.addEventListener("input", () => syncCalorieWidgets(currentCalories()));

  function showError(message: string): void {
    fieldError.textContent = message;
    fieldError.hidden = false;
  }

  function clearError(): void {
    fieldError.hidden = true;
    fieldError.textContent = "";
  }

  function renderScenarios(): void {
    const scenarios = store.list();
    renderLineChart(speedChart, scenarios.map((s) => ({ values: s.response.speed_seq, color: s.color, label: `${s.request.target_calories}` })));
    renderLineChart(hrChart, scenarios.map((s) => ({ values: s.response.heartrate_seq, color: s.color, label: `${s.request.target_calories}` })));

    cards.innerHTML = "";
    for (const scenario of scenarios) {
      const speedAvg = mean(scenario.response.speed_seq);
      const hrAvg = mean(scenario.response.heartrate_seq);
      const card = el("div", { class: "card", "data-scenario-id": String(scenario.id) });
      card.style.borderColor = scenario.color;
      card.dataset.speedAvg = String(speedAvg);
      card.dataset.hrAvg = String(hrAvg);
      card.dataset.distanceKm = String(scenario.response.predicted_distance_km);
      card.append(
        el("div", { class: "card-calories" }, `${scenario.request.target_calories} kcal`),
        el("div", { class: "card-distance" }, `${scenario.response.predicted_distance_km.toFixed(2)} km`),
        el("div", { class: "card-speed" }, `${speedAvg.toFixed(2)} km/h avg`),
        el("div", { class: "card-hr" }, `${hrAvg.toFixed(1)} bpm avg`),
      );
      const remove = el("button", { class: "card-remove" }, "remove");
      remove.addEventListener("click", () => {
        store.remove(scenario.id);
        renderScenarios();
      });
      card.append(remove);
      cards.append(card);
    }
    exportBtn.toggleAttribute("disabled", scenarios.length === 0);
  }

  async function selectRoute(routeId: string): Promise<void> {
    routeSelect.value = routeId;
    const profile = await client.getRouteProfile(routeId);
    renderLineChart(altitudeChart, [{ values: profile.altitude_seq, color: "#64748b", label: "altitude" }]);
  }

  async function loadCatalog(): Promise<void> {
    try {
      meta = await client.getMeta();
      const users = await client.getUsers();
      routes = await client.getRoutes();
      banner.hidden = true;

      userSelect.innerHTML = "";
      for (const user of users) userSelect.append(el("option", { value: user }, user));
      routeSelect.innerHTML = "";
      for (const route of routes) {
        routeSelect.append(el("option", { value: route.route_id }, `${route.route_id} (${route.total_km.toFixed(1)} km)`));
      }
      sportSelect.innerHTML = "";
      for (const sport of meta.sports) sportSelect.append(el("option", { value: sport }, sport));

      const [lo, hi] = meta.calorie_range;
      slider.min = String(Math.floor(lo));
      slider.max = String(Math.ceil(hi));
      syncCalorieWidgets(Math.round((lo + hi) / 2));

      if (routes.length > 0) await selectRoute(routes[0].route_id);
    } catch (err) {
      banner.hidden = false;
      throw err;
    }
  }

  async function runScenario(): Promise<void> {
    clearError();
    const calories = currentCalories();
    if (!Number.isFinite(calories) || calories <= 0) {
      showError("target calories must be a positive number");
      return;
    }
    if (store.isFull) {
      showError(`at most ${MAX_SCENARIOS} scenarios; remove one first`);
      return;
    }
    const request: RecommendRequest = {
      user_id: userSelect.value,
      route_id: routeSelect.value,
      sport: sportSelect.value,
      target_calories: calories,
    };
    const token = store.begin();
    try {
      const response = await client.recommend(request);
      if (store.complete(token, request, response)) renderScenarios();
    } catch (err) {
      store.abort(token);
      if (err instanceof ApiRequestError) {
        showError(`${err.detail.field}: ${err.detail.message}`);
        return;
      }
      banner.hidden = false;
      throw err;
    }
  }

  function exportCsv(): string {
    return scenariosToCsv(store.list());
  }

  banner.querySelector("#retry-btn")!.addEventListener("click", () => void loadCatalog().catch(() => undefined));
  routeSelect.addEventListener("change", () => void selectRoute(routeSelect.value).catch(() => undefined));
  runBtn.addEventListener("click", () => void runScenario());
  clearBtn.addEventListener("click", () => {
    store.clear();
    renderScenarios();
  });
  exportBtn.addEventListener("click", () => {
    if (store.length > 0) downloadCsv("scenarios.csv", exportCsv());
  });

  return {
    store,
    loadCatalog,
    selectRoute,
    runScenario,
    exportCsv,
    get meta() {
      return meta;
    },
    root,
  };
}
