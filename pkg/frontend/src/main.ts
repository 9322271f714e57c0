import { ApiClient } from "./api.js";
import { createApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const apiBase = params.get("api") ?? "http://127.0.0.1:8765";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");

const app = createApp(root, new ApiClient(apiBase));
void app.loadCatalog().catch(() => undefined);
