import { LabelingApi } from "./api.js";
import { LabelingConsole } from "./console.js";

const root = document.getElementById("app");
if (root) {
  const console_ = new LabelingConsole(root, new LabelingApi(""));
  console_.start();
}
